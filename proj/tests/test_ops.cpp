#include <doctest.h>

#include <cmath>

#include "afgan/error.hpp"
#include "afgan/ops.hpp"
#include "support/oracles.hpp"

using namespace afgan;
using Td = Tensor<double>;
using Tf = Tensor<float>;

const Tf* const no_bias_f = nullptr;
const Td* const no_bias_d = nullptr;

TEST_CASE("conv extents") {
  CHECK(conv_out_extent(224, 4, 2, 1) == 112);
  CHECK_THROWS_AS(conv_out_extent(5, 4, 2, 0), ShapeError);
  CHECK(conv_transpose_out_extent(7, 4, 2, 1) == 14);
  CHECK_THROWS_AS(conv_transpose_out_extent(1, 1, 1, 2), ShapeError);
}

TEST_CASE("conv2d all-ones 3x3 with a 2x2 kernel gives fours") {
  Tf y = conv2d(Tf::ones(Shape{1, 1, 3, 3}), Tf::ones(Shape{1, 1, 2, 2}), no_bias_f, ConvGeometry{});
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (float v : y.data()) CHECK(v == 4.0f);
}

TEST_CASE("conv_transpose2d of a single pixel scatters the kernel") {
  Tf y = conv_transpose2d(Tf::full(Shape{1, 1, 1, 1}, 2.5f), Tf::ones(Shape{1, 1, 2, 2}), no_bias_f, ConvGeometry{});
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (float v : y.data()) CHECK(v == 2.5f);
}

TEST_CASE("conv2d matches the nested-loop oracle on random instances") {
  Rng rng(21);
  double worst = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2)), c = 1 + static_cast<int>(rng.below(3));
    const int o = 1 + static_cast<int>(rng.below(3)), k = 1 + static_cast<int>(rng.below(4));
    const int s = 1 + static_cast<int>(rng.below(2)), p = static_cast<int>(rng.below(2));
    const int oh = 1 + static_cast<int>(rng.below(4));
    const int h = (oh - 1) * s + k - 2 * p, w = h;
    if (h < 1) continue;
    Tf x = oracle::random<float>(Shape{n, c, h, w}, rng), wt = oracle::random<float>(Shape{o, c, k, k}, rng);
    Tf b = oracle::random<float>(Shape{o}, rng);
    const ConvGeometry geo{{s, s}, {p, p}};
    worst = std::max(worst, oracle::max_abs_diff(conv2d(x, wt, &b, geo), oracle::conv2d(x, wt, &b, s, s, p, p)));
  }
  Tf x = oracle::random<float>(Shape{1, 2, 8, 8}, rng), wt = oracle::random<float>(Shape{3, 2, 4, 4}, rng);
  worst = std::max(worst, oracle::max_abs_diff(conv2d(x, wt, no_bias_f, ConvGeometry{{2, 2}, {1, 1}}),
                                               oracle::conv2d(x, wt, no_bias_f, 2, 2, 1, 1)));
  CHECK(worst < 1e-5);
}

TEST_CASE("conv_transpose2d matches the scatter-add oracle on random instances") {
  Rng rng(22);
  double worst = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(2)), c = 1 + static_cast<int>(rng.below(3));
    const int o = 1 + static_cast<int>(rng.below(3)), k = 2 + static_cast<int>(rng.below(3));
    const int s = 1 + static_cast<int>(rng.below(2)), p = static_cast<int>(rng.below(2));
    const int h = 1 + static_cast<int>(rng.below(4));
    if ((h - 1) * s - 2 * p + k < 1) continue;
    Tf x = oracle::random<float>(Shape{n, c, h, h + 1}, rng), wt = oracle::random<float>(Shape{c, o, k, k}, rng);
    Tf b = oracle::random<float>(Shape{o}, rng);
    const ConvGeometry geo{{s, s}, {p, p}};
    worst = std::max(worst,
                     oracle::max_abs_diff(conv_transpose2d(x, wt, &b, geo), oracle::conv_transpose2d(x, wt, &b, s, s, p, p)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("adjoint identity <conv(x), y> == <x, conv_transpose(y)>") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 1 + static_cast<int>(rng.below(3)), o = 1 + static_cast<int>(rng.below(3));
    const ConvGeometry geo{{2, 2}, {1, 1}};
    Td x = oracle::random<double>(Shape{2, c, 8, 8}, rng);
    Td w = oracle::random<double>(Shape{o, c, 4, 4}, rng);
    Td y = oracle::random<double>(Shape{2, o, 4, 4}, rng);
    const double lhs = oracle::dot(conv2d(x, w, no_bias_d, geo), y);
    const double rhs = oracle::dot(x, conv_transpose2d(y, w, no_bias_d, geo));
    CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12) < 1e-5);
  }
}

TEST_CASE("batch norm in train mode") {
  SUBCASE("two values per channel map to -1 and 1 with eps 0") {
    Td x(Shape{2, 1, 1, 1}, {1, 3});
    Td y = batch_norm_train(x, Td::ones(Shape{1}), Td::zeros(Shape{1}), 0.0);
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(1.0));
  }
  SUBCASE("output has zero mean and unit variance") {
    Rng rng(4);
    Td x = oracle::random<double>(Shape{4, 2, 3, 3}, rng, -3, 5);
    BatchStats stats;
    Td y = batch_norm_train(x, Td::ones(Shape{2}), Td::zeros(Shape{2}), 1e-5, &stats);
    CHECK(stats.count == 36);
    for (int c = 0; c < 2; ++c) {
      double m = 0, v = 0;
      for (int n = 0; n < 4; ++n)
        for (int i = 0; i < 9; ++i) m += y[(n * 2 + c) * 9 + i];
      m /= 36;
      for (int n = 0; n < 4; ++n)
        for (int i = 0; i < 9; ++i) v += std::pow(y[(n * 2 + c) * 9 + i] - m, 2);
      v /= 36;
      CHECK(std::abs(m) < 1e-12);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
  SUBCASE("a single value per channel is rejected") {
    CHECK_THROWS_AS(batch_norm_train(Td::ones(Shape{1, 2, 1, 1}), Td::ones(Shape{2}), Td::zeros(Shape{2}), 1e-5),
                    ContractError);
  }
}

TEST_CASE("bce loss values") {
  CHECK(std::abs(bce_loss(Td(Shape{1, 1}, {1.0}), Td(Shape{1, 1}, {1.0})).item()) < 1e-10);
  CHECK(bce_loss(Td(Shape{1, 1}, {0.5}), Td(Shape{1, 1}, {1.0})).item() == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(Td(Shape{1, 1}, {0.5}), Td(Shape{1, 1}, {0.0})).item() == doctest::Approx(std::log(2.0)));
  const double expected = -0.5 * (std::log(0.9) + std::log(0.8));
  const double got = bce_loss(Td(Shape{2, 1}, {0.9, 0.2}), Td(Shape{2, 1}, {1.0, 0.0})).item();
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.164252).epsilon(1e-6));
  CHECK(std::isfinite(bce_loss(Td(Shape{1, 1}, {0.0}), Td(Shape{1, 1}, {1.0})).item()));
  CHECK_THROWS_AS(bce_loss(Td(Shape{1, 1}, {0.5}), Td(Shape{1, 1}, {0.3})), ContractError);
  CHECK_THROWS_AS(bce_loss(Td(Shape{2, 1}, {0.5, 0.5}), Td(Shape{1, 1}, {1.0})), ShapeError);
}
