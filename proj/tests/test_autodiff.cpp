#include "doctest.h"

#include "tgcn/adam.hpp"
#include "tgcn/gradcheck.hpp"
#include "tgcn/ops.hpp"

#include <cmath>

using namespace tgcn;

namespace {

constexpr double kGradTol = 1e-4;

// Runs the finite-difference oracle on a unary-in-shape primitive.
double check_unary(const std::function<Var<double>(const Var<double>&)>& op, Shape shape,
                   std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed);
  std::vector<Tensor<double>> inputs{random_tensor(shape, rng, lo, hi)};
  auto result = compare_gradients(
      [&](Tape<double>&, const std::vector<Var<double>>& v) {
        return random_projection(op(v[0]), seed + 99);
      },
      inputs);
  return result.max_rel_error;
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(Tensor<double>({2, 3}, Buffer<double>::Zero(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<double>({2, 0}), DimensionError);
}

TEST_CASE("backward seeds the root with exactly one") {
  Tape<double> tape;
  Tensor<double> x({3}, Buffer<double>::Constant(3, 2.0), true);
  auto v = tape.leaf(x);
  auto y = sum_all(hadamard(v, v));
  tape.backward(y);
  CHECK(y.grad()(0) == 1.0);
  REQUIRE(x.has_grad());
  CHECK(x.grad.size() == x.data.size());
  CHECK(x.grad(0) == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape<double> tape;
  Tensor<double> x({3}, true);
  auto v = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("shared operands accumulate additively") {
  Tape<double> tape;
  Tensor<double> x({1}, Buffer<double>::Constant(1, 3.0), true);
  auto v = tape.leaf(x);
  auto y = sum_all(add(hadamard(v, v), scale(v, 2.0)));  // x^2 + 2x
  tape.backward(y);
  CHECK(x.grad(0) == doctest::Approx(8.0));
}

TEST_CASE("matmul") {
  SUBCASE("identity times M") {
    Tape<double> tape;
    CounterRng rng(1);
    Buffer<double> m(9);
    for (auto& e : m) e = rng.uniform(-3, 3);
    auto M = tape.constant({3, 3}, m);
    auto out = matmul(identity(tape, 3), M);
    CHECK((out.value() - m).abs().maxCoeff() == 0.0);
  }
  SUBCASE("hand product") {
    Tape<double> tape;
    auto a = tape.constant({2, 2}, (Buffer<double>(4) << 1, 2, 3, 4).finished());
    auto b = tape.constant({2, 1}, (Buffer<double>(2) << 0, 1).finished());
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.value()(0) == 2.0);
    CHECK(c.value()(1) == 4.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    Tape<double> tape;
    auto a = tape.constant({2, 3}, Buffer<double>::Zero(6));
    auto b = tape.constant({2, 2}, Buffer<double>::Zero(4));
    try {
      matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
      CHECK(msg.find("[2,2]") != std::string::npos);
    }
  }
  SUBCASE("gradient of sum(A x B) matches finite differences") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
      CounterRng rng(seed);
      std::vector<Tensor<double>> in{random_tensor({4, 5}, rng), random_tensor({5, 3}, rng)};
      auto r = compare_gradients(
          [](Tape<double>&, const std::vector<Var<double>>& v) { return sum_all(matmul(v[0], v[1])); },
          in);
      CHECK(r.max_rel_error < kGradTol);
    }
  }
  SUBCASE("batched and broadcast forms") {
    CounterRng rng(6);
    std::vector<Tensor<double>> in{random_tensor({2, 3, 4}, rng), random_tensor({4, 2}, rng),
                                   random_tensor({3, 3}, rng), random_tensor({2, 4, 5}, rng)};
    auto r = compare_gradients(
        [](Tape<double>&, const std::vector<Var<double>>& v) {
          auto shared_rhs = matmul(v[0], v[1]);   // [2,3,2]
          auto shared_lhs = matmul(v[2], v[0]);   // [2,3,4]
          auto both = matmul(shared_lhs, v[3]);   // [2,3,5]
          return add(random_projection(shared_rhs, 1), random_projection(both, 2));
        },
        in);
    CHECK(r.max_rel_error < kGradTol);
  }
}

TEST_CASE("softmax") {
  Tape<double> tape;
  SUBCASE("zero row is uniform") {
    auto y = softmax(tape.constant({1, 5}, Buffer<double>::Zero(5)), 1);
    for (Index i = 0; i < 5; ++i) CHECK(y.value()(i) == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("closed form [0, ln 3]") {
    auto y = softmax(tape.constant({2}, (Buffer<double>(2) << 0.0, std::log(3.0)).finished()), 0);
    CHECK(std::abs(y.value()(0) - 0.25) < 1e-15);
    CHECK(std::abs(y.value()(1) - 0.75) < 1e-15);
  }
  SUBCASE("rows sum to one, strictly positive, any axis") {
    CounterRng rng(8);
    Buffer<double> v(60);
    for (auto& e : v) e = rng.uniform(-20, 20);
    for (Index axis : {0, 1, 2}) {
      auto y = softmax(tape.constant({3, 4, 5}, v), axis);
      auto s = sum(y, axis);
      CHECK((s.value() - 1.0).abs().maxCoeff() < 1e-6);
      CHECK(y.value().minCoeff() > 0.0);
    }
  }
  SUBCASE("gradient") {
    for (Index axis : {0, 1})
      CHECK(check_unary([axis](const Var<double>& x) { return softmax(x, axis); }, {3, 4}, 11 + axis) <
            kGradTol);
  }
}

TEST_CASE("layer_norm") {
  Tape<double> tape;
  auto ones = tape.constant({2}, Buffer<double>::Ones(2));
  auto zeros = tape.constant({2}, Buffer<double>::Zero(2));
  SUBCASE("constant vector normalises to zero") {
    auto g = tape.constant({4}, Buffer<double>::Ones(4));
    auto b = tape.constant({4}, Buffer<double>::Zero(4));
    auto y = layer_norm(tape.constant({4}, Buffer<double>::Constant(4, 7.0)), 0, g, b);
    CHECK(y.value().abs().maxCoeff() == 0.0);
  }
  SUBCASE("[1,3] maps to [-1,1] up to eps") {
    auto y = layer_norm(tape.constant({2}, (Buffer<double>(2) << 1, 3).finished()), 0, ones, zeros);
    // closed form: (x - 2) / sqrt(1 + 1e-5)
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(std::abs(y.value()(0) + expected) < 1e-12);
    CHECK(std::abs(y.value()(1) - expected) < 1e-12);
    CHECK(std::abs(y.value()(1) - 1.0) < 1e-4);
  }
  SUBCASE("zero gain yields the offset") {
    auto off = tape.constant({2}, (Buffer<double>(2) << 0.5, -2).finished());
    auto y = layer_norm(tape.constant({3, 2}, (Buffer<double>(6) << 1, 5, -2, 3, 9, 9).finished()), 1,
                        zeros, off);
    for (Index r = 0; r < 3; ++r) {
      CHECK(y.value()(2 * r) == 0.5);
      CHECK(y.value()(2 * r + 1) == -2.0);
    }
  }
  SUBCASE("degenerate axis") {
    auto g = tape.constant({1}, Buffer<double>::Ones(1));
    CHECK_THROWS_AS(layer_norm(tape.constant({3, 1}, Buffer<double>::Zero(3)), 1, g, g), DimensionError);
  }
  SUBCASE("gradient w.r.t. input, gain, offset") {
    CounterRng rng(21);
    std::vector<Tensor<double>> in{random_tensor({3, 4}, rng, -2, 2), random_tensor({4}, rng, 0.5, 1.5),
                                   random_tensor({4}, rng)};
    auto r = compare_gradients(
        [](Tape<double>&, const std::vector<Var<double>>& v) {
          return random_projection(layer_norm(v[0], 1, v[1], v[2]), 5);
        },
        in);
    CHECK(r.max_rel_error < kGradTol);
  }
}

TEST_CASE("dropout") {
  Tape<double> tape;
  CounterRng rng(31);
  Buffer<double> v(100);
  for (auto& e : v) e = rng.uniform(-1, 1);
  auto x = tape.constant({100}, v);
  SUBCASE("rate zero is identity in both modes") {
    CHECK((dropout(x, 0.0, true, 1).value() - v).abs().maxCoeff() == 0.0);
    CHECK((dropout(x, 0.0, false, 1).value() - v).abs().maxCoeff() == 0.0);
  }
  SUBCASE("inference mode is identity") {
    CHECK((dropout(x, 0.5, false, 1).value() - v).abs().maxCoeff() == 0.0);
  }
  SUBCASE("invalid rate") {
    CHECK_THROWS_AS(dropout(x, 1.0, true, 1), ConfigError);
    CHECK_THROWS_AS(dropout(x, -0.1, true, 1), ConfigError);
  }
  SUBCASE("survivor fraction over 1e6 entries") {
    Tape<float> big;
    auto ones = big.constant({1000000}, Buffer<float>::Ones(1000000));
    auto y = dropout(ones, 0.5, true, 12345);
    const double survivors = (y.value() > 0.0f).template cast<double>().sum() / 1e6;
    CHECK(std::abs(survivors - 0.5) < 0.002);
    CHECK(y.value().maxCoeff() == 2.0f);
  }
  SUBCASE("seeded and reproducible") {
    auto a = dropout(x, 0.3, true, 77);
    auto b = dropout(x, 0.3, true, 77);
    auto c = dropout(x, 0.3, true, 78);
    CHECK((a.value() - b.value()).abs().maxCoeff() == 0.0);
    CHECK((a.value() - c.value()).abs().maxCoeff() > 0.0);
  }
  SUBCASE("gradient with a fixed mask") {
    CHECK(check_unary([](const Var<double>& x) { return dropout(x, 0.4, true, 5); }, {4, 6}, 41) <
          kGradTol);
  }
}

TEST_CASE("pointwise family values") {
  Tape<double> tape;
  auto zero = tape.scalar(0.0);
  CHECK(sigmoid(zero).item() == 0.5);
  CHECK(tgcn::tanh(zero).item() == 0.0);
  CHECK(leaky_relu(tape.scalar(-1.0), 0.2).item() == doctest::Approx(-0.2));
  CHECK(leaky_relu(tape.scalar(3.0), 0.2).item() == 3.0);
  CHECK(tgcn::abs(tape.scalar(-2.5)).item() == 2.5);
  CHECK(sigmoid(tape.scalar(-800.0)).item() >= 0.0);
  CHECK(sigmoid(tape.scalar(800.0)).item() == 1.0);
}

TEST_CASE("structural errors") {
  Tape<double> tape;
  auto a = tape.constant({2, 3}, Buffer<double>::Zero(6));
  auto b = tape.constant({3, 3}, Buffer<double>::Zero(9));
  CHECK_THROWS_AS(concat<double>({a, b}, 1), DimensionError);
  CHECK_NOTHROW(concat<double>({a, b}, 0));
  CHECK_THROWS_AS(transpose(a, {0, 0}), DimensionError);
  CHECK_THROWS_AS(transpose(a, {0}), DimensionError);
  CHECK_THROWS_AS(add(a, b), DimensionError);
  CHECK_THROWS_AS(reshape(a, {4}), DimensionError);
}

TEST_CASE("every pointwise and structural primitive passes the finite-difference oracle") {
  using V = Var<double>;
  CHECK(check_unary([](const V& x) { return sigmoid(x); }, {3, 4}, 51, -3, 3) < kGradTol);
  CHECK(check_unary([](const V& x) { return tgcn::tanh(x); }, {3, 4}, 52, -2, 2) < kGradTol);
  CHECK(check_unary([](const V& x) { return leaky_relu(x, 0.2); }, {3, 4}, 53) < kGradTol);
  CHECK(check_unary([](const V& x) { return tgcn::abs(x); }, {3, 4}, 54) < kGradTol);
  CHECK(check_unary([](const V& x) { return scale(x, -1.7); }, {3, 4}, 55) < kGradTol);
  CHECK(check_unary([](const V& x) { return add_scalar(x, 0.3); }, {3, 4}, 56) < kGradTol);
  CHECK(check_unary([](const V& x) { return log_clamped(x, 1e-12); }, {3, 4}, 57, 0.2, 2.0) <
        kGradTol);
  CHECK(check_unary([](const V& x) { return transpose(x, {2, 0, 1}); }, {2, 3, 4}, 58) < kGradTol);
  CHECK(check_unary([](const V& x) { return sum(x, 1); }, {2, 3, 4}, 59) < kGradTol);
  CHECK(check_unary([](const V& x) { return mean(x, 0); }, {2, 3, 4}, 60) < kGradTol);
  CHECK(check_unary([](const V& x) { return reshape(x, {6, 4}); }, {2, 3, 4}, 61) < kGradTol);
  CHECK(check_unary([](const V& x) { return slice(x, 1, 1, 3); }, {2, 3, 4}, 62) < kGradTol);
  CHECK(check_unary([](const V& x) { return broadcast_to(x, {5, 3, 4}); }, {3, 1}, 63) < kGradTol);
  CHECK(check_unary([](const V& x) { return gram(x); }, {4, 3}, 64) < kGradTol);
  CHECK(check_unary([](const V& x) { return transpose2d(x); }, {4, 3}, 65) < kGradTol);

  CounterRng rng(70);
  std::vector<Tensor<double>> in{random_tensor({2, 3, 4}, rng), random_tensor({3, 4}, rng),
                                 random_tensor({2, 1, 4}, rng), random_tensor({2, 3, 2}, rng)};
  auto r = compare_gradients(
      [](Tape<double>&, const std::vector<V>& v) {
        auto s = add(v[0], v[1]);
        auto d = subtract(v[0], v[2]);
        auto h = hadamard(v[0], v[2]);
        auto c = concat<double>({v[0], v[3]}, 2);
        return add(add(random_projection(s, 1), random_projection(d, 2)),
                   add(random_projection(h, 3), random_projection(c, 4)));
      },
      in);
  CHECK(r.max_rel_error < kGradTol);
}

TEST_CASE("corrupted adjoint is caught by the oracle") {
  CounterRng rng(80);
  std::vector<Tensor<double>> in{random_tensor({5}, rng)};
  auto r = compare_gradients(
      [](Tape<double>& tape, const std::vector<Var<double>>& v) {
        const Index id = v[0].id();
        Buffer<double> y = v[0].value().square();
        auto bad = tape.record({5}, y, {v[0]}, [id](Tape<double>& t, Index self) {
          t.grad_slot(id) += t.grad(self) * t.value(id);  // should be 2x
        });
        return random_projection(bad, 3);
      },
      in);
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("deterministic replay") {
  auto run = [] {
    Tape<float> tape;
    CounterRng rng(90);
    Buffer<float> v(64);
    for (auto& e : v) e = static_cast<float>(rng.uniform(-1, 1));
    auto x = tape.constant({8, 8}, v);
    auto y = softmax(matmul(dropout(x, 0.3, true, 4), transpose2d(x)), 1);
    return Buffer<float>(y.value());
  };
  Buffer<float> a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0);
}

TEST_CASE("adam") {
  AdamConfig cfg;
  SUBCASE("zero gradient from fresh state leaves parameters unchanged") {
    Buffer<double> p = Buffer<double>::Constant(3, 1.5);
    AdamMoments<double> st;
    adam_update<double>(p, Buffer<double>::Zero(3), st, 1, cfg);
    CHECK((p - 1.5).abs().maxCoeff() == 0.0);
  }
  SUBCASE("moments decay under zero gradient") {
    Buffer<double> p = Buffer<double>::Zero(1);
    AdamMoments<double> st{Buffer<double>::Constant(1, 0.4), Buffer<double>::Constant(1, 0.2)};
    adam_update<double>(p, Buffer<double>::Zero(1), st, 2, cfg);
    CHECK(st.m(0) == doctest::Approx(0.4 * 0.9));
    CHECK(st.v(0) == doctest::Approx(0.2 * 0.999));
  }
  SUBCASE("first step with g = 1 moves by lr") {
    for (double lr : {0.003, 0.01, 0.1}) {
      AdamConfig c;
      c.lr = lr;
      Buffer<double> p = Buffer<double>::Zero(1);
      AdamMoments<double> st;
      adam_update<double>(p, Buffer<double>::Ones(1), st, 1, c);
      CHECK(std::abs(std::abs(p(0)) - lr) < 1e-9);
    }
  }
  SUBCASE("minimises x^2") {
    AdamConfig c;
    c.lr = 0.01;
    Tensor<double> x({1}, Buffer<double>::Constant(1, 1.0), true);
    Adam<double> opt({&x}, c);
    int steps = 0;
    while (std::abs(x.data(0)) >= 1e-3 && steps < 2000) {
      Tape<double> tape;
      auto v = tape.leaf(x);
      opt.zero_grad();
      tape.backward(sum_all(hadamard(v, v)));
      opt.step();
      ++steps;
    }
    CHECK(std::abs(x.data(0)) < 1e-3);
    CHECK(steps <= 2000);
  }
}

TEST_CASE("gram is exactly symmetric") {
  Tape<double> tape;
  CounterRng rng(3);
  Tensor<double> x = random_tensor({37, 11}, rng);
  RowMatrix<double> g = to_matrix(gram(tape.leaf(x)));
  CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::Map<const RowMatrix<double>> m(x.data.data(), 37, 11);
  CHECK((g - m * m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}
