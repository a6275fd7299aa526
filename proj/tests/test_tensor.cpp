#include <doctest.h>

#include <cmath>

#include "afgan/error.hpp"
#include "afgan/grad_check.hpp"
#include "afgan/ops.hpp"
#include "support/oracles.hpp"

using namespace afgan;
using Td = Tensor<double>;

TEST_CASE("shape validates extents and counts elements") {
  CHECK(Shape{2, 3, 4}.numel() == 24);
  CHECK(Shape{}.numel() == 1);
  CHECK_THROWS_AS(Shape({2, 0}), ShapeError);
  CHECK(Shape{1, 3072, 7, 7}.str() == "(1, 3072, 7, 7)");
}

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Td(Shape{2, 2}, {1, 2, 3}), ShapeError);
  Td t(Shape{2}, {1, 2});
  Td u = t;
  u.mutable_data()[0] = 9;
  CHECK(t[0] == 1);  // copy on write
  CHECK(u[0] == 9);
}

TEST_CASE("elementwise values") {
  CHECK(tanh(Td::scalar(0)).item() == 0.0);
  CHECK(sigmoid(Td::scalar(0)).item() == 0.5);
  CHECK(leaky_relu(Td::scalar(-1.0), 0.2).item() == doctest::Approx(-0.2).epsilon(1e-15));
  CHECK(leaky_relu(Td::scalar(3.0), 0.2).item() == 3.0);
  CHECK(log(Td::scalar(1.0)).item() == 0.0);
  CHECK(std::isfinite(log(Td::scalar(0.0)).item()));
  CHECK(relu(Td(Shape{2}, {-1, 2}))[0] == 0.0);
}

TEST_CASE("binary ops reject mismatched shapes and naming both") {
  Td a = Td::ones(Shape{2, 3}), b = Td::ones(Shape{3, 2});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(3, 2)") != std::string::npos);
  }
}

TEST_CASE("per-channel broadcast and its gradient") {
  Tape<double> tape;
  Td x = tape.watch(Td::ones(Shape{2, 3, 2, 2}));
  Td b = tape.watch(Td(Shape{3}, {1, 2, 3}));
  Td y = add(x, b);
  CHECK(y[4] == 3.0);  // n=0, c=1
  auto g = tape.backward(sum(y));
  CHECK(g.of(b).shape() == Shape{3});
  CHECK(g.of(b)[0] == 8.0);  // N*H*W contributions
  Td b4 = tape.watch(Td(Shape{1, 3, 1, 1}, {1, 2, 3}));
  auto g4 = tape.backward(sum(mul(x, b4)));
  CHECK(g4.of(b4).shape() == Shape{1, 3, 1, 1});
}

TEST_CASE("matmul identity, full-size FC shape and loop oracle") {
  Td I(Shape{2, 2}, {1, 0, 0, 1}), A(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(matmul(I, A).same_as(A));
  CHECK(afgan::conv_out_extent(224, 4, 2, 1) == 112);
  Rng rng(3);
  auto a = oracle::random<float>(Shape{3, 4}, rng), b = oracle::random<float>(Shape{4, 2}, rng);
  CHECK(oracle::max_abs_diff(matmul(a, b), oracle::matmul(a, b)) < 1e-6);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("matmul shape 1x100 by 100x150528") {
  // Shape propagation only: a 15M-element weight is small enough to allocate once.
  Tensor<float> z = Tensor<float>::zeros(Shape{1, 100});
  Tensor<float> w = Tensor<float>::zeros(Shape{100, 150528});
  CHECK(matmul(z, w).shape() == Shape{1, 150528});
}

TEST_CASE("reshape") {
  Td a = Td::ones(Shape{1, 150528});
  CHECK(reshape(a, Shape{1, 3072, 7, 7}).shape() == Shape{1, 3072, 7, 7});
  Rng rng(1);
  Td r = oracle::random<double>(Shape{2, 6}, rng);
  CHECK(reshape(reshape(r, Shape{3, 4}), Shape{2, 6}).same_as(r));
  CHECK(reshape(r, Shape{2, 6}).same_as(r));
  CHECK_THROWS_AS(reshape(r, Shape{5}), ShapeError);
}

TEST_CASE("reduce") {
  CHECK(mean(Td(Shape{4}, {1, 2, 3, 4})).item() == 2.5);
  CHECK(sum(Td::ones(Shape{2, 3})).item() == 6.0);
  CHECK(reduce(Td::ones(Shape{2, 3}), Reduction::sum, std::vector<int>{1}).shape() == Shape{2});
  CHECK_THROWS_AS(reduce(Td::ones(Shape{2, 3}), Reduction::sum, std::vector<int>{2}), ShapeError);
  Tape<double> tape;
  Td x = tape.watch(Td(Shape{4}, {1, 2, 3, 4}));
  auto g = tape.backward(mean(x));
  for (int i = 0; i < 4; ++i) CHECK(g.of(x)[i] == 0.25);
}

TEST_CASE("backward basics") {
  Tape<double> tape;
  Td x = tape.watch(Td::scalar(3));
  Td w = tape.watch(Td::scalar(5));
  CHECK(tape.backward(mul(x, x)).of(x).item() == 6.0);
  CHECK(tape.backward(mul(x, x)).of(w).item() == 0.0);
  CHECK(tape.backward(add(x, x)).of(x).item() == 2.0);
  CHECK_THROWS_AS(tape.backward(add(Td::ones(Shape{2}), tape.watch(Td::ones(Shape{2})))), ContractError);
  CHECK_THROWS_AS(tape.backward(Td::scalar(1)), ContractError);
  Tape<double> other;
  CHECK_THROWS_AS(other.backward(mul(x, x)), ContractError);
}

TEST_CASE("untracked inputs do not record") {
  Td y = add(Td::ones(Shape{2}), Td::ones(Shape{2}));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("tape replay is deterministic") {
  Rng r1(5), r2(5);
  auto run = [](Rng& rng) {
    Tape<double> tape;
    Td w = tape.watch(oracle::random<double>(Shape{4, 3}, rng));
    Td x = oracle::random<double>(Shape{2, 4}, rng);
    Td loss = sum(sigmoid(matmul(x, w)));
    return std::make_pair(loss.item(), tape.backward(loss).of(w));
  };
  auto a = run(r1), b = run(r2);
  CHECK(a.first == b.first);
  CHECK(a.second.same_as(b.second));
}

TEST_CASE("grad_check: sum, constant, sigmoid composite") {
  Rng rng(9);
  const Td p = oracle::random<double>(Shape{5}, rng);
  auto r = grad_check([](const Td& x) { return sum(x); }, p);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-9);
  auto c = grad_check([](const Td&) { return Td::scalar(2.0); }, p);
  CHECK(c.passed);
  const Td x = oracle::random<double>(Shape{5, 1}, rng);
  auto s = grad_check([&](const Td& w) { return sum(sigmoid(matmul(reshape(w, Shape{1, 5}), x))); }, p);
  CHECK(s.passed);
  CHECK(s.max_rel_error < 1e-4);
}

TEST_CASE("grad_check: bce of sigmoid of conv2d on 1x1x6x6") {
  Rng rng(10);
  const Td x = oracle::random<double>(Shape{1, 1, 6, 6}, rng);
  const Td w = oracle::random<double>(Shape{1, 1, 6, 6}, rng);
  const Td y = Td::ones(Shape{1, 1, 1, 1});
  auto r = grad_check(
      [&](const std::vector<Td>& in) { return bce_loss(sigmoid(conv2d(in[0], in[1], static_cast<const Td*>(nullptr), ConvGeometry{})), y); },
      {x, w});
  CHECK(r.passed);
}

TEST_CASE("grad_check reports the coordinate of a non-finite value") {
  const Td p(Shape{2}, {1.0, -1e-6});
  CHECK_THROWS_AS(grad_check([](const Td& x) { return sum(exp(scale(exp(x), 800.0))); }, p), NumericalError);
}
