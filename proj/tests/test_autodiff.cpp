#include <cmath>

#include "doctest.h"
#include "marketgraph/adam.hpp"
#include "marketgraph/errors.hpp"
#include "marketgraph/gradcheck.hpp"
#include "marketgraph/ops.hpp"

using namespace marketgraph;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces any output to a scalar with fixed random weights, so every output
// coordinate contributes to the checked gradient.
Var weighted_sum(Tape& tape, const Var& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

double check_params(const std::function<Var(Tape&, std::vector<Var>&)>& build,
                    std::vector<Parameter>& params) {
  std::vector<Parameter*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  return grad_check(
      [&](Tape& tape) {
        std::vector<Var> leaves;
        for (auto& p : params) leaves.push_back(tape.leaf(p));
        return weighted_sum(tape, build(tape, leaves));
      },
      ptrs);
}

}  // namespace

TEST_CASE("tensor construction validates size and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({1}, {std::nan("")}), DomainError);
  CHECK_THROWS_AS(Tensor({1}, {INFINITY}), DomainError);
  const Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(t.shape() == Shape{2, 2});
  CHECK(t.size() == 4);
}

TEST_CASE("matmul") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  CHECK(matmul(a, b) == Tensor::matrix({{19, 22}, {43, 50}}));
  CHECK(matmul(Tensor::identity(2), b) == b);
  CHECK(matmul(a, Tensor({2, 2})) == Tensor({2, 2}));
  CHECK_THROWS_AS(matmul(a, Tensor({3, 1})), DimensionError);

  SUBCASE("backward: dA = dC B^T, dB = A^T dC") {
    Parameter pa("a", a), pb("b", b);
    Tape tape;
    Var loss = sum(matmul(tape.leaf(pa), tape.leaf(pb)));
    tape.backward(loss);
    // dC is all ones, so dA[i][k] = sum_j B[k][j] and dB[k][j] = sum_i A[i][k].
    CHECK(pa.grad == Tensor::matrix({{11, 15}, {11, 15}}));
    CHECK(pb.grad == Tensor::matrix({{4, 4}, {6, 6}}));
  }
}

TEST_CASE("elementwise fixed points") {
  Tape tape;
  Var z = tape.constant(Tensor::vector({0.0, -1.0}));
  CHECK(tanh(z).value()[0] == 0.0);
  CHECK(sigmoid(z).value()[0] == 0.5);
  CHECK(relu(z).value()[1] == 0.0);
  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  CHECK_THROWS_AS(log(tape.constant(Tensor::vector({-2.0}))), DomainError);
}

TEST_CASE("broadcasting is limited to scalar-with-tensor") {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1, 2, 3}));
  Var s = tape.constant(Tensor::scalar(2));
  CHECK(add(a, s).value() == Tensor::vector({3, 4, 5}));
  CHECK(mul(s, a).value() == Tensor::vector({2, 4, 6}));
  CHECK_THROWS_AS(add(a, tape.constant(Tensor::vector({1, 2}))), DimensionError);
}

TEST_CASE("dropout") {
  Rng rng(5);
  Tape tape;
  const Tensor x = random_tensor({4, 50}, rng);
  Var v = tape.constant(x);
  CHECK(dropout(v, 0.3, false, rng).value() == x);
  CHECK(dropout(v, 0.0, true, rng).value() == x);
  CHECK_THROWS(dropout(v, 1.0, true, rng));
  CHECK_THROWS(dropout(v, -0.1, true, rng));

  Var d = dropout(v, 0.3, true, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (d.value()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(d.value()[i] == doctest::Approx(x[i] / 0.7).epsilon(1e-15));
    }
  }
  CHECK(zeros > 30);
  CHECK(zeros < 90);
  CHECK(tape.seed(d.id()) != 0);
}

TEST_CASE("backward basics") {
  SUBCASE("x^2 at 3 has gradient 6") {
    Parameter x("x", Tensor::scalar(3.0));
    Tape tape;
    Var xv = tape.leaf(x);
    tape.backward(mul(xv, xv));
    CHECK(x.grad.item() == 6.0);
  }
  SUBCASE("fan-out accumulates") {
    Parameter x("x", Tensor::scalar(2.0));
    Tape tape;
    Var xv = tape.leaf(x);
    tape.backward(add(mul(xv, xv), scale(xv, 3.0)));
    CHECK(x.grad.item() == 7.0);
  }
  SUBCASE("unreachable leaf keeps a zero gradient") {
    Parameter x("x", Tensor::scalar(2.0)), y("y", Tensor::scalar(5.0));
    Tape tape;
    Var xv = tape.leaf(x);
    tape.leaf(y);
    tape.backward(square(xv));
    CHECK(y.grad.item() == 0.0);
  }
  SUBCASE("errors") {
    Parameter x("x", Tensor::vector({1, 2}));
    Tape tape;
    Var xv = tape.leaf(x);
    CHECK_THROWS_AS(tape.backward(xv), TapeError);
    Var loss = sum(xv);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TapeError);
    CHECK_THROWS_AS(tape.constant(Tensor::scalar(1)), TapeError);
    tape.reset();
    Var again = sum(tape.leaf(x));
    tape.backward(again);
    CHECK(x.grad == Tensor::vector({2, 2}));
  }
}

TEST_CASE("gradient of f + g equals gradient of f plus gradient of g") {
  Rng rng(11);
  Parameter a("a", random_tensor({3, 3}, rng)), b("b", random_tensor({3, 3}, rng));
  auto f = [](const Var& x, const Var& y) { return sum(tanh(matmul(x, y))); };
  auto g = [](const Var& x, const Var& y) { return sum(mul(sigmoid(x), y)); };

  Tape t1;
  t1.backward(f(t1.leaf(a), t1.leaf(b)));
  Tensor ga_f = a.grad, gb_f = b.grad;
  a.zero_grad();
  b.zero_grad();
  Tape t2;
  t2.backward(g(t2.leaf(a), t2.leaf(b)));
  Tensor ga_g = a.grad, gb_g = b.grad;
  a.zero_grad();
  b.zero_grad();
  Tape t3;
  Var av = t3.leaf(a), bv = t3.leaf(b);
  t3.backward(add(f(av, bv), g(av, bv)));
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(std::abs(a.grad[i] - (ga_f[i] + ga_g[i])) <= 1e-12);
    CHECK(std::abs(b.grad[i] - (gb_f[i] + gb_g[i])) <= 1e-12);
  }
}

TEST_CASE("grad_check oracle behaviour") {
  Rng rng(3);
  const Tensor x = random_tensor({5}, rng);
  CHECK(grad_check([](Tape&, const Var& v) { return sum(tanh(v)); }, x) <= 1e-6);
  CHECK(grad_check([](Tape&, const Var& v) { return sum(scale(v, 3.0)); }, x) <= 1e-10);
}

TEST_CASE("elementwise ops pass grad_check at random points") {
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor x = random_tensor({2, 3}, rng);
    const Tensor pos = random_tensor({2, 3}, rng, 0.2, 2.0);
    const double c = rng.uniform(-2, 2);
    auto check = [&](const char* name, const ScalarFn& f, const Tensor& at) {
      INFO(name);
      CHECK(grad_check(f, at) <= 1e-4);
    };
    check("tanh", [](Tape& t, const Var& v) { return weighted_sum(t, tanh(v)); }, x);
    check("sigmoid", [](Tape& t, const Var& v) { return weighted_sum(t, sigmoid(v)); }, x);
    check("relu", [](Tape& t, const Var& v) { return weighted_sum(t, relu(v)); }, x);
    check("log", [](Tape& t, const Var& v) { return weighted_sum(t, log(v)); }, pos);
    check("exp", [](Tape& t, const Var& v) { return weighted_sum(t, exp(v)); }, x);
    check("abs", [](Tape& t, const Var& v) { return weighted_sum(t, abs(v)); }, x);
    check("square", [](Tape& t, const Var& v) { return weighted_sum(t, square(v)); }, x);
    check("scale", [c](Tape& t, const Var& v) { return weighted_sum(t, scale(v, c)); }, x);
    check("add_scalar",
          [c](Tape& t, const Var& v) { return weighted_sum(t, mul(add_scalar(v, c), v)); }, x);
    check("sum", [](Tape&, const Var& v) { return sum(square(v)); }, x);
    check("mean", [](Tape&, const Var& v) { return mean(square(v)); }, x);
    check("reshape", [](Tape& t, const Var& v) { return weighted_sum(t, reshape(v, {3, 2})); }, x);
    check("transpose", [](Tape& t, const Var& v) { return weighted_sum(t, transpose(v)); }, x);
    check("mask",
          [](Tape& t, const Var& v) {
            return weighted_sum(t, mask(v, Tensor({2, 3}, {1, 0, 1, 0, 1, 1})));
          },
          x);
    check("dropout (train, fixed seed)",
          [](Tape& t, const Var& v) {
            Rng r(21);
            return weighted_sum(t, dropout(v, 0.3, true, r));
          },
          x);
    check("l1_loss",
          [](Tape&, const Var& v) { return l1_loss(v, Tensor({2, 3}, {5, 5, 5, -5, -5, -5})); },
          x);
  }
}

TEST_CASE("binary ops pass grad_check including scalar broadcast") {
  Rng rng(23);
  std::vector<Parameter> params{{"a", random_tensor({2, 3}, rng)},
                                {"b", random_tensor({2, 3}, rng)},
                                {"s", random_tensor({}, rng)}};
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return add(v[0], v[1]); }, params) <= 1e-4);
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return sub(v[0], v[1]); }, params) <= 1e-4);
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return mul(v[0], v[1]); }, params) <= 1e-4);
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return mul(v[2], v[0]); }, params) <= 1e-4);
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return sub(v[0], v[2]); }, params) <= 1e-4);
  CHECK(check_params([](Tape&, std::vector<Var>& v) { return add(v[2], v[1]); }, params) <= 1e-4);
}

TEST_CASE("matrix and tensor-layout ops pass grad_check") {
  Rng rng(29);
  SUBCASE("matmul") {
    std::vector<Parameter> p{{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, p) <= 1e-4);
  }
  SUBCASE("causal_conv1d unbatched") {
    std::vector<Parameter> p{{"x", random_tensor({2, 7}, rng)},
                             {"k", random_tensor({3, 2, 3}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return causal_conv1d(v[0], v[1], 2); },
                       p) <= 1e-4);
  }
  SUBCASE("causal_conv1d batched") {
    std::vector<Parameter> p{{"x", random_tensor({2, 2, 3, 6}, rng)},
                             {"k", random_tensor({2, 2, 2}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return causal_conv1d(v[0], v[1], 3); },
                       p) <= 1e-4);
  }
  SUBCASE("temporal_dense") {
    std::vector<Parameter> p{{"x", random_tensor({2, 2, 3, 5}, rng)},
                             {"k", random_tensor({3, 2, 4}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return temporal_dense(v[0], v[1]); }, p) <=
          1e-4);
  }
  SUBCASE("channel_mix and bias_add") {
    std::vector<Parameter> p{{"x", random_tensor({2, 3, 2, 4}, rng)},
                             {"w", random_tensor({4, 3}, rng)},
                             {"b", random_tensor({4}, rng)}};
    CHECK(check_params(
              [](Tape&, std::vector<Var>& v) { return bias_add(channel_mix(v[0], v[1]), v[2]); },
              p) <= 1e-4);
  }
  SUBCASE("bias_add on [B, F]") {
    std::vector<Parameter> p{{"x", random_tensor({3, 4}, rng)}, {"b", random_tensor({4}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return bias_add(v[0], v[1]); }, p) <= 1e-4);
  }
  SUBCASE("node_mix") {
    std::vector<Parameter> p{{"x", random_tensor({2, 2, 3, 4}, rng)},
                             {"m", random_tensor({3, 3}, rng)}};
    CHECK(check_params([](Tape&, std::vector<Var>& v) { return node_mix(v[0], v[1]); }, p) <= 1e-4);
  }
  SUBCASE("row_normalize_with_self_loops") {
    std::vector<Parameter> p{{"a", random_tensor({4, 4}, rng, 0.1, 1.0)}};
    CHECK(check_params(
              [](Tape&, std::vector<Var>& v) { return row_normalize_with_self_loops(v[0]); }, p) <=
          1e-4);
  }
}

TEST_CASE("causal_conv1d semantics") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 3}, {1, 2, 3}));
  // Tap 0 (current) weight 0, tap 1 (one step back) weight 1.
  Var y = causal_conv1d(x, tape.constant(Tensor({1, 1, 2}, {0, 1})), 1);
  CHECK(y.value() == Tensor({1, 3}, {0, 1, 2}));
  Var id = causal_conv1d(x, tape.constant(Tensor({1, 1, 1}, {1})), 1);
  CHECK(id.value() == x.value());
  CHECK_THROWS(causal_conv1d(x, tape.constant(Tensor({1, 1, 1}, {1})), 0));
  CHECK_THROWS(causal_conv1d(tape.constant(Tensor({1, 0})), tape.constant(Tensor({1, 1, 1}, {1})), 1));

  SUBCASE("perturbing strictly-future inputs leaves earlier outputs bit-identical") {
    Rng rng(31);
    const Tensor base = random_tensor({2, 12}, rng);
    const Tensor kernel = random_tensor({3, 2, 3}, rng);
    for (std::size_t t = 0; t < 12; ++t) {
      Tensor bumped = base;
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = t + 1; s < 12; ++s) bumped.at(c, s) += rng.uniform(-5, 5);
      Tape tp;
      const Tensor y0 = causal_conv1d(tp.constant(base), tp.constant(kernel), 2).value();
      const Tensor y1 = causal_conv1d(tp.constant(bumped), tp.constant(kernel), 2).value();
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t s = 0; s <= t; ++s) CHECK(y0.at(c, s) == y1.at(c, s));
    }
  }
}

TEST_CASE("temporal_dense equals the last column of causal_conv1d") {
  Rng rng(37);
  const Tensor x = random_tensor({2, 3, 2, 6}, rng);
  const Tensor k = random_tensor({4, 3, 6}, rng);
  Tape tape;
  const Tensor full = causal_conv1d(tape.constant(x), tape.constant(k), 1).value();
  const Tensor last = temporal_dense(tape.constant(x), tape.constant(k)).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t n = 0; n < 2; ++n)
        CHECK(last[((b * 4 + s) * 2 + n)] == full[((b * 4 + s) * 2 + n) * 6 + 5]);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Parameter p("p", Tensor::vector({1.0, -2.0}));
    AdamState state;
    std::vector<Parameter*> ps{&p};
    adam_step(ps, state, {});
    CHECK(p.value == Tensor::vector({1.0, -2.0}));
    CHECK(state.step == 1);
  }
  SUBCASE("first step with unit gradient moves by lr / (1 + eps)") {
    Parameter p("p", Tensor::scalar(0.5));
    p.grad = Tensor::scalar(1.0);
    AdamState state;
    std::vector<Parameter*> ps{&p};
    adam_step(ps, state, {});
    // m_hat = 1, v_hat = 1 -> step = lr * 1 / (1 + 1e-8).
    CHECK(p.value.item() == doctest::Approx(0.5 - 0.001 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("step counter increases and identical runs agree") {
    auto run = [] {
      Parameter p("p", Tensor::vector({0.3, 0.7}));
      AdamState state;
      std::vector<Parameter*> ps{&p};
      for (int i = 0; i < 5; ++i) {
        p.grad = Tensor::vector({0.1 * i, -0.2});
        adam_step(ps, state, {});
        CHECK(state.step == i + 1);
      }
      return p.value;
    };
    CHECK(run() == run());
  }
  SUBCASE("invalid learning rate") {
    Parameter p("p", Tensor::scalar(0.0));
    AdamState state;
    std::vector<Parameter*> ps{&p};
    CHECK_THROWS(adam_step(ps, state, {0.0}));
  }
  SUBCASE("frozen parameters are skipped") {
    Parameter p("p", Tensor::scalar(1.0), false);
    p.grad = Tensor::scalar(1.0);
    AdamState state;
    std::vector<Parameter*> ps{&p};
    adam_step(ps, state, {});
    CHECK(p.value.item() == 1.0);
  }
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng root(42);
  Rng s1 = root.split(1), s1b = root.split(1), s2 = root.split(2);
  const auto v1 = s1.next_u64();
  CHECK(v1 == s1b.next_u64());
  CHECK(v1 != s2.next_u64());
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(u.index(7) < 7);
  }
}
