#include "doctest.h"

#include "tgcn/dagg.hpp"
#include "tgcn/gradcheck.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

using namespace tgcn;

namespace {

GraphGenConfig plain(Combine d1, Combine d2) {
  GraphGenConfig cfg;
  cfg.delta1 = d1;
  cfg.delta2 = d2;
  cfg.layer_norm_enabled = false;
  cfg.dropout_rate = 0.0;
  return cfg;
}

EmbeddingBank<double> bank_from(Index n, Index steps, Index d, const std::vector<double>& nodes,
                                const std::vector<double>& times, Combine d1 = Combine::Add) {
  GraphGenConfig cfg;
  cfg.delta1 = d1;
  auto bank = EmbeddingBank<double>::init(n, steps, d, cfg, 0);
  for (Index i = 0; i < n * d; ++i) bank.e_node.data[i] = nodes[i];
  for (Index i = 0; i < steps * d; ++i) bank.e_time.data[i] = times[i];
  return bank;
}

RowMatrix<double> raw_scores(EmbeddingBank<double>& bank, Index t, const GraphGenConfig& cfg) {
  Tape<double> tape;
  auto vars = bind(tape, bank);
  return build_adjacency(vars, t, cfg, false, 0).score_matrix();
}

}  // namespace

TEST_CASE("combine on single rows") {
  Eigen::VectorXd a(2), zero = Eigen::VectorXd::Zero(2), ones = Eigen::VectorXd::Ones(2);
  a << 1, 2;
  Eigen::VectorXd b(2);
  b << 3, 4;
  CHECK(combine<double>(a, zero, Combine::Add) == a);
  CHECK(combine<double>(a, ones, Combine::Hadamard) == a);
  Eigen::VectorXd cat = combine<double>(a, b, Combine::Concat);
  REQUIRE(cat.size() == 4);
  CHECK(cat(0) == 1);
  CHECK(cat(1) == 2);
  CHECK(cat(2) == 3);
  CHECK(cat(3) == 4);
  CHECK_THROWS_AS(combine<double>(a, Eigen::VectorXd::Zero(3), Combine::Add), DimensionError);
}

TEST_CASE("zero embeddings give a uniform propagation matrix") {
  const Index n = 4;
  auto bank = bank_from(n, 2, 3, std::vector<double>(12, 0.0), std::vector<double>(6, 0.0));
  Tape<double> tape;
  auto vars = bind(tape, bank);
  auto adj = build_adjacency(vars, 1, plain(Combine::Add, Combine::Add), false, 0);
  RowMatrix<double> p = to_matrix(adj.propagation);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      CHECK(p(i, j) == doctest::Approx(i == j ? 1.0 + 1.0 / n : 1.0 / n).epsilon(1e-12));
}

TEST_CASE("add/add scores equal the brute-force Gram matrix") {
  // Hand-chosen integer embeddings, N=3, d_e=2.
  const std::vector<double> nodes{1, 2, -1, 0, 3, -2};
  const std::vector<double> times{0, 1, 2, -1};
  auto bank = bank_from(3, 2, 2, nodes, times);
  for (Index t = 1; t <= 2; ++t) {
    RowMatrix<double> scores = raw_scores(bank, t, plain(Combine::Add, Combine::Add));
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        double expect = 0;
        for (Index k = 0; k < 2; ++k)
          expect += (nodes[i * 2 + k] + times[(t - 1) * 2 + k]) * (nodes[j * 2 + k] + times[(t - 1) * 2 + k]);
        CHECK(scores(i, j) == expect);
      }
  }
}

TEST_CASE("lambda zero gives uniform rows regardless of embeddings") {
  auto bank = EmbeddingBank<double>::init(5, 3, 4, GraphGenConfig{}, 7);
  GraphGenConfig cfg;
  cfg.lambda = 0.0;
  cfg.dropout_rate = 0.0;
  Tape<double> tape;
  auto vars = bind(tape, bank);
  RowMatrix<double> norm = build_adjacency(vars, 2, cfg, false, 0).normalized();
  CHECK((norm.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("rows of the propagation matrix sum to two") {
  for (auto variant : {GraphVariant::A, GraphVariant::B, GraphVariant::C, GraphVariant::D}) {
    auto bank = EmbeddingBank<double>::init(6, 4, 3, with_variant({}, variant), 11);
    for (Index t = 1; t <= 4; ++t) {
      Tape<double> tape;
      auto vars = bind(tape, bank);
      auto adj = build_variant_adjacency(vars, t, variant, GraphGenConfig{}, true, 5 + t);
      RowMatrix<double> p = to_matrix(adj.propagation);
      CHECK((p.rowwise().sum().array() - 2.0).abs().maxCoeff() < 1e-6);
      CHECK((adj.normalized().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
      CHECK(adj.time_step == t);
    }
  }
}

TEST_CASE("expansion identity over random seeds") {
  GraphGenConfig cfg = plain(Combine::Add, Combine::Add);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed);
    const Index n = 2 + rng.below(7), d = 1 + rng.below(6), steps = 1 + rng.below(12);
    auto bank = EmbeddingBank<double>::init(n, steps, d, cfg, seed);
    for (Index t = 1; t <= steps; ++t) {
      RowMatrix<double> direct = raw_scores(bank, t, cfg);
      RowMatrix<double> expanded = expand_terms(bank, t, cfg).weighted(1, 1, 1);
      REQUIRE((direct - expanded).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("expand_terms contract") {
  auto bank = EmbeddingBank<double>::init(3, 2, 2, GraphGenConfig{}, 1);
  CHECK_THROWS_AS(expand_terms(bank, 1, GraphGenConfig{}), ContractError);
  CHECK_THROWS_AS(expand_terms(bank, 1, plain(Combine::Hadamard, Combine::Add)), ContractError);
  GraphGenConfig ln_only = plain(Combine::Add, Combine::Add);
  ln_only.layer_norm_enabled = true;
  CHECK_THROWS_AS(expand_terms(bank, 1, ln_only), ContractError);
  CHECK_THROWS_AS(expand_terms(bank, 3, plain(Combine::Add, Combine::Add)), DimensionError);

  bank.e_time.data.setZero();
  auto terms = expand_terms(bank, 2, plain(Combine::Add, Combine::Add));
  CHECK(terms.cross.cwiseAbs().maxCoeff() == 0.0);
  CHECK(terms.temporal.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("static special case is identical for every step") {
  auto bank = EmbeddingBank<double>::init(7, 12, 4, GraphGenConfig{}, 3);
  GraphGenConfig cfg;
  cfg.lambda2 = cfg.lambda3 = 0.0;
  RowMatrix<double> first;
  for (Index t = 1; t <= 12; ++t) {
    RowMatrix<double> spatial =
        expand_terms(bank, t, plain(Combine::Add, Combine::Add)).weighted(1, 0, 0);
    Tape<double> tape;
    auto vars = bind(tape, bank);
    RowMatrix<double> term = build_term_adjacency(vars, t, cfg).score_matrix();
    CHECK((term - spatial).cwiseAbs().maxCoeff() < 1e-12);
    if (t == 1)
      first = term;
    else
      CHECK((term - first).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a single shared time row makes the adjacency step-invariant") {
  auto bank = EmbeddingBank<double>::init(6, 5, 3, GraphGenConfig{}, 9);
  for (Index t = 1; t < 5; ++t)
    for (Index k = 0; k < 3; ++k) bank.e_time.data[t * 3 + k] = bank.e_time.data[k];
  GraphGenConfig cfg;
  cfg.dropout_rate = 0.0;
  RowMatrix<double> first = raw_scores(bank, 1, cfg);
  for (Index t = 2; t <= 5; ++t) {
    RowMatrix<double> s = raw_scores(bank, t, cfg);
    CHECK(std::memcmp(s.data(), first.data(), sizeof(double) * s.size()) == 0);
  }
}

TEST_CASE("equal operators give exactly symmetric scores") {
  for (Combine op : {Combine::Add, Combine::Hadamard, Combine::Concat}) {
    GraphGenConfig cfg;
    cfg.delta1 = cfg.delta2 = op;
    cfg.dropout_rate = 0.0;
    auto bank = EmbeddingBank<double>::init(6, 3, 4, cfg, 21);
    for (auto& g : bank.norm_gain.data) g = 0.5 + g;
    RowMatrix<double> s = raw_scores(bank, 2, cfg);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("variants C and D are mutual transposes") {
  GraphGenConfig base;
  base.layer_norm_enabled = false;
  base.dropout_rate = 0.0;
  auto bank = EmbeddingBank<double>::init(3, 2, 4, base, 17);
  for (Index t = 1; t <= 2; ++t) {
    Tape<double> tape;
    auto vars = bind(tape, bank);
    RowMatrix<double> c = build_variant_adjacency(vars, t, GraphVariant::C, base, false, 0).score_matrix();
    RowMatrix<double> d = build_variant_adjacency(vars, t, GraphVariant::D, base, false, 0).score_matrix();
    CHECK((c - d.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    // Enumeration of <a + t, b * t>.
    Eigen::Map<const RowMatrix<double>> e(bank.e_node.data.data(), 3, 4);
    Eigen::Map<const RowMatrix<double>> tm(bank.e_time.data.data(), 2, 4);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j) {
        double expect = 0;
        for (Index k = 0; k < 4; ++k) expect += (e(i, k) + tm(t - 1, k)) * (e(j, k) * tm(t - 1, k));
        CHECK(c(i, j) == doctest::Approx(expect).epsilon(1e-12));
      }
  }
}

TEST_CASE("variant B with all-ones time rows is the static Gram") {
  GraphGenConfig base;
  base.layer_norm_enabled = false;
  base.dropout_rate = 0.0;
  auto bank = EmbeddingBank<double>::init(5, 3, 3, base, 4);
  bank.e_time.data.setOnes();
  Eigen::Map<const RowMatrix<double>> e(bank.e_node.data.data(), 5, 3);
  RowMatrix<double> gram = e * e.transpose();
  Tape<double> tape;
  auto vars = bind(tape, bank);
  RowMatrix<double> b = build_variant_adjacency(vars, 2, GraphVariant::B, base, false, 0).score_matrix();
  CHECK((b - gram).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("variant A works over doubled factors") {
  GraphGenConfig cfg = with_variant({}, GraphVariant::A);
  cfg.dropout_rate = 0.0;
  auto bank = EmbeddingBank<double>::init(4, 2, 3, cfg, 2);
  CHECK(bank.norm_gain.size() == 6);
  Tape<double> tape;
  auto vars = bind(tape, bank);
  CHECK(node_time_embedding(vars, 1, cfg.delta1).shape() == Shape{4, 6});
  auto adj = build_adjacency(vars, 1, cfg, false, 0);
  CHECK(adj.scores.shape() == Shape{4, 4});
}

TEST_CASE("configuration errors") {
  auto bank = EmbeddingBank<double>::init(3, 4, 2, GraphGenConfig{}, 1);
  Tape<double> tape;
  auto vars = bind(tape, bank);
  CHECK_THROWS_AS(build_adjacency(vars, 0, GraphGenConfig{}, false, 0), DimensionError);
  CHECK_THROWS_AS(build_adjacency(vars, 5, GraphGenConfig{}, false, 0), DimensionError);
  GraphGenConfig mixed = plain(Combine::Concat, Combine::Add);
  CHECK_THROWS_AS(build_adjacency(vars, 1, mixed, false, 0), ConfigError);
  GraphGenConfig bad;
  bad.lambda = std::nan("");
  CHECK_THROWS_AS(build_adjacency(vars, 1, bad, false, 0), ConfigError);
  CHECK_THROWS_AS(parse_variant("E"), ConfigError);
  CHECK_THROWS_AS(parse_combine("max"), ConfigError);
  CHECK(parse_variant("C") == GraphVariant::C);
  CHECK(parse_combine("concat") == Combine::Concat);
}

TEST_CASE("dropout in the graph is seeded and inactive at inference") {
  GraphGenConfig cfg;
  cfg.dropout_rate = 0.3;
  auto bank = EmbeddingBank<double>::init(5, 2, 4, cfg, 8);
  Tape<double> tape;
  auto vars = bind(tape, bank);
  RowMatrix<double> a = build_adjacency(vars, 1, cfg, true, 42).score_matrix();
  RowMatrix<double> b = build_adjacency(vars, 1, cfg, true, 42).score_matrix();
  RowMatrix<double> c = build_adjacency(vars, 1, cfg, true, 43).score_matrix();
  CHECK(a == b);
  CHECK(a != c);
  GraphGenConfig off = cfg;
  off.dropout_rate = 0.0;
  CHECK(build_adjacency(vars, 1, cfg, false, 42).score_matrix() ==
        build_adjacency(vars, 1, off, true, 42).score_matrix());
}

TEST_CASE("gradients through the propagation matrix match finite differences") {
  for (auto variant : {GraphVariant::A, GraphVariant::B, GraphVariant::C, GraphVariant::D}) {
    GraphGenConfig cfg = with_variant({}, variant);
    cfg.dropout_rate = 0.2;
    auto bank = EmbeddingBank<double>::init(4, 3, 3, cfg, 31);
    CounterRng rng(5);
    for (auto& g : bank.norm_gain.data) g = rng.uniform(0.5, 1.5);
    for (auto& o : bank.norm_offset.data) o = rng.uniform(-0.3, 0.3);
    std::vector<Tensor<double>> inputs{bank.e_node, bank.e_time, bank.norm_gain, bank.norm_offset};
    auto result = compare_gradients(
        [&](Tape<double>&, const std::vector<Var<double>>& v) {
          BankVars<double> bv{v[0], v[1], v[2], v[3]};
          auto adj = build_adjacency(bv, 2, cfg, true, 77);
          return random_projection(adj.propagation, 13);
        },
        inputs);
    CHECK(result.max_rel_error < 1e-4);
  }
  auto bank = EmbeddingBank<double>::init(4, 3, 3, GraphGenConfig{}, 3);
  std::vector<Tensor<double>> inputs{bank.e_node, bank.e_time};
  GraphGenConfig cfg;
  cfg.lambda1 = 0.7;
  cfg.lambda2 = 1.3;
  cfg.lambda3 = -0.4;
  auto result = compare_gradients(
      [&](Tape<double>& tape, const std::vector<Var<double>>& v) {
        BankVars<double> bv{v[0], v[1], tape.scalar(0.0), tape.scalar(0.0)};
        return random_projection(build_term_adjacency(bv, 3, cfg).propagation, 2);
      },
      inputs);
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("export writes csv and pgm") {
  RowMatrix<double> m(2, 3);
  m << 0.1, 0.2, 0.7, 0.5, 0.25, 0.25;
  auto stem = std::filesystem::temp_directory_path() / "tgcn_test_export" / "adj_t02";
  export_adjacency(m, stem);
  std::ifstream csv(stem.string() + ".csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "0.1,0.2,0.7");
  std::ifstream pgm(stem.string() + ".pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  pgm.get();
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 2);
  CHECK(maxval == 255);
  unsigned char px[6];
  pgm.read(reinterpret_cast<char*>(px), 6);
  CHECK(px[0] == 0);
  CHECK(px[2] == 255);
  std::filesystem::remove_all(stem.parent_path());
}
