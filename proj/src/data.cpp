#include "tgcn/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace tgcn {

static_assert(std::endian::native == std::endian::little, "STTS containers assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'T', 'T', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagMask = 1u;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated header in " + path.string());
  return v;
}

std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) throw DimensionError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

std::string trim(std::string s) {
  auto blank = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), blank));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), blank).base(), s.end());
  return s;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// "nodes=307" or "nodes=a,b,c".
std::vector<std::string> count_or_names(const std::string& value, const std::string& prefix) {
  Index n = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
  if (ec == std::errc() && end == value.data() + value.size()) {
    if (n <= 0) throw FormatError(prefix + " count must be positive");
    std::vector<std::string> names;
    for (Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
    return names;
  }
  return split_list(value, ',');
}

std::string format_float(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_cell(const std::string& cell, float& out) {
  std::string c = trim(cell);
  if (c.empty()) return false;
  std::string lower = c;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "nan" || lower == "na") return false;
  auto [end, ec] = std::from_chars(c.data(), c.data() + c.size(), out);
  if (ec != std::errc() || end != c.data() + c.size()) throw FormatError("unparseable CSV cell '" + c + "'");
  return std::isfinite(out);
}

SpatialTemporalSeries load_binary(std::ifstream& in, const std::filesystem::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic in " + path.string());
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto steps = read_pod<std::uint32_t>(in, path);
  const auto nodes = read_pod<std::uint32_t>(in, path);
  const auto features = read_pod<std::uint32_t>(in, path);
  const auto granularity = read_pod<std::uint32_t>(in, path);
  const auto flags = read_pod<std::uint32_t>(in, path);
  if (steps == 0 || nodes == 0 || features == 0) throw FormatError("empty extents in " + path.string());

  SpatialTemporalSeries s(steps, nodes, features);
  s.granularity_minutes = granularity;
  const auto bytes = static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(s.values.size()));
  if (!in.read(reinterpret_cast<char*>(s.values.data()), bytes)) throw FormatError("truncated payload in " + path.string());
  if (flags & kFlagMask) {
    s.missing.resize(static_cast<std::size_t>(s.steps * s.nodes));
    if (!in.read(reinterpret_cast<char*>(s.missing.data()), static_cast<std::streamsize>(s.missing.size())))
      throw FormatError("truncated mask in " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  for (Index i = 0; i < s.values.size(); ++i)
    if (!std::isfinite(s.values[i])) throw FormatError("non-finite value in " + path.string() + "; mark it missing");
  return s;
}

SpatialTemporalSeries load_csv(const std::filesystem::path& path) {
  std::filesystem::path meta_path = path;
  meta_path += ".meta";
  std::ifstream meta(meta_path);
  if (!meta) throw InputError("missing metadata sidecar " + meta_path.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(meta, line);) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("metadata line without '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!kv.count("nodes") || !kv.count("features")) throw FormatError("metadata needs nodes= and features=");
  auto node_ids = count_or_names(kv["nodes"], "node");
  auto feature_names = count_or_names(kv["features"], "f");
  const auto n = static_cast<Index>(node_ids.size());
  const auto f = static_cast<Index>(feature_names.size());
  std::uint32_t granularity = 5;
  if (kv.count("granularity_minutes")) {
    const auto& g = kv["granularity_minutes"];
    auto [end, ec] = std::from_chars(g.data(), g.data() + g.size(), granularity);
    if (ec != std::errc() || end != g.data() + g.size() || granularity == 0)
      throw FormatError("bad granularity_minutes '" + g + "'");
  }

  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty CSV " + path.string());
  if (static_cast<Index>(split_list(line, ',').size()) != n * f)
    throw FormatError("CSV header has " + std::to_string(split_list(line, ',').size()) + " columns, expected " +
                      std::to_string(n * f));

  std::vector<float> values;
  std::vector<std::uint8_t> missing;
  bool any_missing = false;
  Index steps = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_list(line, ',');
    if (static_cast<Index>(cells.size()) != n * f)
      throw FormatError("CSV row " + std::to_string(steps + 1) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(n * f));
    for (Index node = 0; node < n; ++node) {
      bool node_missing = false;
      for (Index feat = 0; feat < f; ++feat) {
        float v = 0.0f;
        if (!parse_cell(cells[static_cast<std::size_t>(node * f + feat)], v)) {
          node_missing = true;
          v = 0.0f;
        }
        values.push_back(v);
      }
      missing.push_back(node_missing ? 1 : 0);
      any_missing = any_missing || node_missing;
    }
    ++steps;
  }
  if (steps == 0) throw FormatError("CSV has no data rows");

  SpatialTemporalSeries s(steps, n, f);
  s.granularity_minutes = granularity;
  s.node_ids = std::move(node_ids);
  s.feature_names = std::move(feature_names);
  s.values = Eigen::Map<Eigen::ArrayXf>(values.data(), static_cast<Index>(values.size()));
  if (any_missing) {
    s.missing = std::move(missing);
    for (Index t = 0; t < steps; ++t)
      for (Index v = 0; v < n; ++v)
        if (s.is_missing(t, v)) s.mark_missing(t, v);
  }
  return s;
}

}  // namespace

// ------------------------------------------------------------------ series

SpatialTemporalSeries::SpatialTemporalSeries(Index steps_, Index nodes_, Index features_)
    : steps(steps_), nodes(nodes_), features(features_) {
  if (steps <= 0 || nodes <= 0 || features <= 0) throw DimensionError("series extents must be positive");
  values = Eigen::ArrayXf::Zero(steps * nodes * features);
}

void SpatialTemporalSeries::mark_missing(Index step, Index node) {
  if (step < 0 || step >= steps || node < 0 || node >= nodes) throw DimensionError("mark_missing out of range");
  if (missing.empty()) missing.assign(static_cast<std::size_t>(steps * nodes), 0);
  missing[static_cast<std::size_t>(step * nodes + node)] = 1;
  values.segment(offset(step, node), features).setZero();
}

std::size_t SpatialTemporalSeries::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), std::uint8_t{1}));
}

SpatialTemporalSeries SpatialTemporalSeries::slice_steps(Index begin, Index end) const {
  if (begin < 0 || end > steps || begin >= end) throw DimensionError("slice_steps range out of bounds");
  SpatialTemporalSeries out(end - begin, nodes, features);
  out.granularity_minutes = granularity_minutes;
  out.node_ids = node_ids;
  out.feature_names = feature_names;
  out.values = values.segment(begin * nodes * features, (end - begin) * nodes * features);
  if (has_mask()) {
    std::vector<std::uint8_t> part(missing.begin() + begin * nodes, missing.begin() + end * nodes);
    if (std::find(part.begin(), part.end(), std::uint8_t{1}) != part.end()) out.missing = std::move(part);
  }
  return out;
}

void SpatialTemporalSeries::validate() const {
  if (values.size() != steps * nodes * features) throw DimensionError("series payload size mismatch");
  if (has_mask() && static_cast<Index>(missing.size()) != steps * nodes) throw DimensionError("mask size mismatch");
  if (!node_ids.empty() && static_cast<Index>(node_ids.size()) != nodes) throw DimensionError("node_ids size mismatch");
  if (!feature_names.empty() && static_cast<Index>(feature_names.size()) != features)
    throw DimensionError("feature_names size mismatch");
  if (granularity_minutes == 0) throw ConfigError("granularity_minutes must be positive");
  if (!values.allFinite()) throw InputError("series contains non-finite values");
}

// ----------------------------------------------------------------- storage

void save_container(const SpatialTemporalSeries& s, const std::filesystem::path& path) {
  s.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  const bool with_mask = s.has_mask() && s.missing_count() > 0;
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, checked_u32(s.steps, "steps"));
  write_pod(out, checked_u32(s.nodes, "nodes"));
  write_pod(out, checked_u32(s.features, "features"));
  write_pod(out, s.granularity_minutes);
  write_pod(out, with_mask ? kFlagMask : 0u);
  out.write(reinterpret_cast<const char*>(s.values.data()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(s.values.size())));
  if (with_mask)
    out.write(reinterpret_cast<const char*>(s.missing.data()), static_cast<std::streamsize>(s.missing.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

void save_csv(const SpatialTemporalSeries& s, const std::filesystem::path& path) {
  s.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto name = [](const std::vector<std::string>& names, Index i, const std::string& prefix) {
    return names.empty() ? prefix + std::to_string(i) : names[static_cast<std::size_t>(i)];
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  for (Index n = 0; n < s.nodes; ++n)
    for (Index f = 0; f < s.features; ++f)
      out << (n + f > 0 ? "," : "") << name(s.node_ids, n, "node") << ':' << name(s.feature_names, f, "f");
  out << '\n';
  for (Index t = 0; t < s.steps; ++t) {
    for (Index n = 0; n < s.nodes; ++n)
      for (Index f = 0; f < s.features; ++f) {
        if (n + f > 0) out << ',';
        if (!s.is_missing(t, n)) out << format_float(s.at(t, n, f));
      }
    out << '\n';
  }

  auto joined = [&](const std::vector<std::string>& names, Index count) {
    if (names.empty()) return std::to_string(count);
    std::string r;
    for (std::size_t i = 0; i < names.size(); ++i) r += (i ? "," : "") + names[i];
    return r;
  };
  std::filesystem::path meta_path = path;
  meta_path += ".meta";
  std::ofstream meta(meta_path, std::ios::trunc);
  meta << "nodes=" << joined(s.node_ids, s.nodes) << '\n'
       << "features=" << joined(s.feature_names, s.features) << '\n'
       << "granularity_minutes=" << s.granularity_minutes << '\n';
}

SpatialTemporalSeries load_container(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("no such file " + path.string());
  std::ifstream in(path, std::ios::binary);
  char head[4] = {};
  in.read(head, 4);
  const bool stts = in.gcount() == 4 && std::memcmp(head, kMagic, 4) == 0;
  if (!stts && path.extension() == ".csv") return load_csv(path);
  in.clear();
  in.seekg(0);
  return load_binary(in, path);
}

// ------------------------------------------------------------------ splits

SeriesSplit split(const SpatialTemporalSeries& series, const SplitRatios& r, Index min_steps) {
  if (!(r.train > 0 && r.val > 0 && r.test > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  // The 1e-9 nudge keeps exact products such as 0.7 * 10 from flooring low.
  const double n = static_cast<double>(series.steps);
  const auto b1 = static_cast<Index>(std::floor(r.train * n + 1e-9));
  const auto b2 = static_cast<Index>(std::floor((r.train + r.val) * n + 1e-9));
  const Index sizes[3] = {b1, b2 - b1, series.steps - b2};
  const char* names[3] = {"train", "validation", "test"};
  for (int k = 0; k < 3; ++k)
    if (sizes[k] < min_steps)
      throw InputError(std::string(names[k]) + " split has " + std::to_string(sizes[k]) + " steps, needs at least " +
                       std::to_string(min_steps));
  SeriesSplit out;
  out.train = series.slice_steps(0, b1);
  out.val = series.slice_steps(b1, b2);
  out.test = series.slice_steps(b2, series.steps);
  out.val_begin = b1;
  out.test_begin = b2;
  return out;
}

// ------------------------------------------------------------------ scaler

Scaler Scaler::fit(const SpatialTemporalSeries& train) {
  const Index f = train.features;
  std::vector<double> sum(static_cast<std::size_t>(f), 0.0), sq(static_cast<std::size_t>(f), 0.0);
  std::size_t count = 0;
  for (Index t = 0; t < train.steps; ++t)
    for (Index n = 0; n < train.nodes; ++n) {
      if (train.is_missing(t, n)) continue;
      ++count;
      for (Index c = 0; c < f; ++c) sum[c] += train.at(t, n, c);
    }
  if (count == 0) throw InputError("scaler fit on a split with no observed entries");
  Scaler s;
  for (Index c = 0; c < f; ++c) s.mean.push_back(sum[c] / static_cast<double>(count));
  for (Index t = 0; t < train.steps; ++t)
    for (Index n = 0; n < train.nodes; ++n) {
      if (train.is_missing(t, n)) continue;
      for (Index c = 0; c < f; ++c) sq[c] += std::pow(train.at(t, n, c) - s.mean[c], 2);
    }
  for (Index c = 0; c < f; ++c) {
    const double sd = std::sqrt(sq[c] / static_cast<double>(count));
    s.clamped.push_back(sd < kMinStd);
    s.std.push_back(std::max(sd, kMinStd));
  }
  return s;
}

SpatialTemporalSeries Scaler::apply(const SpatialTemporalSeries& series) const {
  if (static_cast<Index>(mean.size()) != series.features) throw DimensionError("scaler channel count mismatch");
  SpatialTemporalSeries out = series;
  for (Index t = 0; t < series.steps; ++t)
    for (Index n = 0; n < series.nodes; ++n) {
      if (series.is_missing(t, n)) continue;
      for (Index c = 0; c < series.features; ++c)
        out.at(t, n, c) = static_cast<float>(apply(static_cast<double>(series.at(t, n, c)), c));
    }
  return out;
}

SpatialTemporalSeries Scaler::invert(const SpatialTemporalSeries& series) const {
  if (static_cast<Index>(mean.size()) != series.features) throw DimensionError("scaler channel count mismatch");
  SpatialTemporalSeries out = series;
  for (Index t = 0; t < series.steps; ++t)
    for (Index n = 0; n < series.nodes; ++n) {
      if (series.is_missing(t, n)) continue;
      for (Index c = 0; c < series.features; ++c)
        out.at(t, n, c) = static_cast<float>(invert(static_cast<double>(series.at(t, n, c)), c));
    }
  return out;
}

// ----------------------------------------------------------------- windows

WindowedSamples::WindowedSamples(std::shared_ptr<const SpatialTemporalSeries> normalized,
                                 std::shared_ptr<const SpatialTemporalSeries> raw, Index input_steps, Index horizon,
                                 Index target_channel)
    : normalized_(std::move(normalized)),
      raw_(std::move(raw)),
      input_steps_(input_steps),
      horizon_(horizon),
      target_(target_channel) {
  if (!normalized_ || !raw_) throw ContractError("windowed samples need both series");
  if (normalized_->steps != raw_->steps || normalized_->nodes != raw_->nodes || normalized_->features != raw_->features)
    throw DimensionError("normalized and raw series extents differ");
  if (input_steps_ < 1 || horizon_ < 1) throw ConfigError("input_steps and horizon must be positive");
  if (target_ < 0 || target_ >= raw_->features) throw ConfigError("target channel out of range");
  count_ = raw_->steps - (input_steps_ + horizon_) + 1;
  if (count_ < 1) throw InputError("series shorter than one window");
}

template <typename S>
Batch<S> WindowedSamples::batch(const std::vector<Index>& windows) const {
  const auto b = static_cast<Index>(windows.size());
  const Index n = nodes(), f = features();
  Batch<S> out{Tensor<S>({b, input_steps_, n, f}), Tensor<S>({b, horizon_, n, 1}), Tensor<S>({b, horizon_, n, 1}),
               Tensor<S>({b, horizon_, n, 1})};
  for (Index k = 0; k < b; ++k) {
    const Index w = windows[static_cast<std::size_t>(k)];
    if (w < 0 || w >= count_) throw DimensionError("window index " + std::to_string(w) + " out of range");
    const Index in_len = input_steps_ * n * f;
    out.inputs.data.segment(k * in_len, in_len) =
        normalized_->values.segment(normalized_->offset(w, 0), in_len).template cast<S>();
    for (Index h = 0; h < horizon_; ++h)
      for (Index v = 0; v < n; ++v) {
        const Index step = w + input_steps_ + h;
        const Index at = (k * horizon_ + h) * n + v;
        out.targets.data[at] = static_cast<S>(normalized_->at(step, v, target_));
        out.raw_targets.data[at] = static_cast<S>(raw_->at(step, v, target_));
        out.observed.data[at] = raw_->is_missing(step, v) ? S(0) : S(1);
      }
  }
  return out;
}

template Batch<float> WindowedSamples::batch<float>(const std::vector<Index>&) const;
template Batch<double> WindowedSamples::batch<double>(const std::vector<Index>&) const;

// ----------------------------------------------------------------- metrics

ErrorMetrics compute_metrics(const Eigen::ArrayXd& truth, const Eigen::ArrayXd& pred, double mask_eps,
                             const Eigen::ArrayXd* observed) {
  if (truth.size() != pred.size()) throw DimensionError("metric inputs differ in size");
  if (observed && observed->size() != truth.size()) throw DimensionError("metric mask differs in size");
  double abs_sum = 0, sq_sum = 0, ape_sum = 0;
  ErrorMetrics m;
  for (Index i = 0; i < truth.size(); ++i) {
    if (observed && (*observed)[i] == 0.0) continue;
    const double e = pred[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    ++m.count;
    if (std::abs(truth[i]) > mask_eps) {
      ape_sum += std::abs(e / truth[i]);
      ++m.mape_count;
    }
  }
  if (m.count == 0) throw InputError("no observed entries to score");
  if (m.mape_count == 0) throw InputError("MAPE undefined: no truth entry exceeds mask_eps");
  m.mae = abs_sum / static_cast<double>(m.count);
  m.rmse = std::sqrt(sq_sum / static_cast<double>(m.count));
  m.mape = 100.0 * ape_sum / static_cast<double>(m.mape_count);
  return m;
}

MetricAccumulator::MetricAccumulator(Index horizon, double mask_eps)
    : horizon_(horizon), mask_eps_(mask_eps), sums_(static_cast<std::size_t>(horizon)) {
  if (horizon < 1) throw ConfigError("horizon must be positive");
}

template <typename S>
void MetricAccumulator::add(const Tensor<S>& truth, const Tensor<S>& pred, const Tensor<S>& observed) {
  if (truth.shape != pred.shape || truth.shape != observed.shape) throw DimensionError("metric tensors differ in shape");
  if (truth.shape.size() != 4 || truth.shape[1] != horizon_) throw DimensionError("expected [B, H, N, O] tensors");
  const Index b = truth.shape[0], inner = truth.shape[2] * truth.shape[3];
  for (Index k = 0; k < b; ++k)
    for (Index h = 0; h < horizon_; ++h) {
      Sums& s = sums_[static_cast<std::size_t>(h)];
      for (Index i = 0; i < inner; ++i) {
        const Index at = (k * horizon_ + h) * inner + i;
        if (observed.data[at] == S(0)) continue;
        const double t = static_cast<double>(truth.data[at]);
        const double e = static_cast<double>(pred.data[at]) - t;
        s.abs += std::abs(e);
        s.sq += e * e;
        ++s.n;
        if (std::abs(t) > mask_eps_) {
          s.ape += std::abs(e / t);
          ++s.n_ape;
        }
      }
    }
}

template void MetricAccumulator::add<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template void MetricAccumulator::add<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

std::vector<ErrorMetrics> MetricAccumulator::finish() const {
  auto finish_one = [](const Sums& s) {
    if (s.n == 0) throw InputError("no observed entries to score");
    if (s.n_ape == 0) throw InputError("MAPE undefined: no truth entry exceeds mask_eps");
    ErrorMetrics m;
    m.count = s.n;
    m.mape_count = s.n_ape;
    m.mae = s.abs / static_cast<double>(s.n);
    m.rmse = std::sqrt(s.sq / static_cast<double>(s.n));
    m.mape = 100.0 * s.ape / static_cast<double>(s.n_ape);
    return m;
  };
  std::vector<ErrorMetrics> rows;
  Sums pooled;
  for (const Sums& s : sums_) {
    rows.push_back(finish_one(s));
    pooled.abs += s.abs;
    pooled.sq += s.sq;
    pooled.ape += s.ape;
    pooled.n += s.n;
    pooled.n_ape += s.n_ape;
  }
  rows.push_back(finish_one(pooled));
  return rows;
}

void MetricAccumulator::write_csv(const std::vector<ErrorMetrics>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << "horizon,MAE,RMSE,MAPE\n" << std::setprecision(9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << (i + 1 == rows.size() ? std::string("avg") : std::to_string(i + 1)) << ',' << rows[i].mae << ','
        << rows[i].rmse << ',' << rows[i].mape << '\n';
  }
}

// ------------------------------------------------------------------- noise

SpatialTemporalSeries inject_gaussian_noise(const SpatialTemporalSeries& series, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sigma must be finite and >= 0");
  SpatialTemporalSeries out = series;
  if (sigma == 0.0) return out;
  for (Index t = 0; t < series.steps; ++t)
    for (Index n = 0; n < series.nodes; ++n) {
      if (series.is_missing(t, n)) continue;
      for (Index c = 0; c < series.features; ++c) {
        const Index at = series.offset(t, n, c);
        out.values[at] = static_cast<float>(series.values[at] + sigma * standard_normal(seed, static_cast<std::uint64_t>(at)));
      }
    }
  return out;
}

std::string format_increment(double clean, double polluted) {
  const double pct = clean == 0.0 ? 0.0 : 100.0 * (polluted - clean) / clean;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << (pct < 0 ? "-" : "+") << std::abs(pct) << '%';
  return os.str();
}

}  // namespace tgcn
