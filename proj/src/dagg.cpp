#include "tgcn/dagg.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace tgcn {

std::string_view to_string(Combine op) {
  switch (op) {
    case Combine::Add:
      return "add";
    case Combine::Hadamard:
      return "hadamard";
    case Combine::Concat:
      return "concat";
  }
  return "?";
}

Combine parse_combine(std::string_view name) {
  if (name == "add" || name == "+") return Combine::Add;
  if (name == "hadamard" || name == "mul" || name == "*") return Combine::Hadamard;
  if (name == "concat" || name == "cat" || name == "|") return Combine::Concat;
  throw ConfigError("unknown combine operator '" + std::string(name) + "'");
}

std::string_view to_string(GraphVariant v) {
  switch (v) {
    case GraphVariant::A:
      return "A";
    case GraphVariant::B:
      return "B";
    case GraphVariant::C:
      return "C";
    case GraphVariant::D:
      return "D";
  }
  return "?";
}

GraphVariant parse_variant(std::string_view name) {
  if (name == "A" || name == "a") return GraphVariant::A;
  if (name == "B" || name == "b") return GraphVariant::B;
  if (name == "C" || name == "c") return GraphVariant::C;
  if (name == "D" || name == "d") return GraphVariant::D;
  throw ConfigError("unknown graph variant '" + std::string(name) + "'");
}

void GraphGenConfig::validate() const {
  if (!std::isfinite(lambda) || !std::isfinite(lambda1) || !std::isfinite(lambda2) ||
      !std::isfinite(lambda3))
    throw ConfigError("graph weights must be finite");
  if ((delta1 == Combine::Concat) != (delta2 == Combine::Concat))
    throw ConfigError("delta1 and delta2 must yield equal widths (both concat or neither)");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("graph dropout rate must lie in [0, 1)");
}

GraphGenConfig with_variant(GraphGenConfig base, GraphVariant variant) {
  switch (variant) {
    case GraphVariant::A:
      base.delta1 = base.delta2 = Combine::Concat;
      break;
    case GraphVariant::B:
      base.delta1 = base.delta2 = Combine::Hadamard;
      break;
    case GraphVariant::C:
      base.delta1 = Combine::Add;
      base.delta2 = Combine::Hadamard;
      break;
    case GraphVariant::D:
      base.delta1 = Combine::Hadamard;
      base.delta2 = Combine::Add;
      break;
  }
  base.lambda = 1.0;
  return base;
}

void export_adjacency(const RowMatrix<double>& normalized, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const Index n = normalized.rows();
  {
    std::ofstream csv(stem.string() + ".csv");
    if (!csv) throw FormatError("cannot write " + stem.string() + ".csv");
    csv << std::setprecision(9);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < normalized.cols(); ++j) csv << (j ? "," : "") << normalized(i, j);
      csv << '\n';
    }
  }
  std::ofstream pgm(stem.string() + ".pgm", std::ios::binary);
  if (!pgm) throw FormatError("cannot write " + stem.string() + ".pgm");
  pgm << "P5\n" << normalized.cols() << ' ' << n << "\n255\n";
  const double lo = normalized.minCoeff(), hi = normalized.maxCoeff();
  const double range = hi - lo;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < normalized.cols(); ++j) {
      double level = range > 0 ? (normalized(i, j) - lo) / range * 255.0 : 0.0;
      pgm.put(static_cast<char>(static_cast<unsigned char>(std::lround(level))));
    }
}

}  // namespace tgcn
