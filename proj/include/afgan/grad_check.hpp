#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "afgan/tensor.hpp"

namespace afgan {

struct CoordinateCheck {
  std::size_t input = 0;
  std::int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<CoordinateCheck> coordinates;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates probed per input; 0 checks every coordinate. A sampled subset
  // is drawn deterministically from `seed`.
  std::int64_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

// Scalar-valued function of one or more 64-bit tensors. The inputs passed in
// may be tape leaves; the function must record on whatever tape they carry.
using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares reverse-mode gradients against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h, with relative error
// |a - n| / max(|a|, |n|, 1e-8). Throws NumericalError naming the coordinate
// when f or a gradient is non-finite.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& points,
                           const GradCheckOptions& options = {});

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& point,
                           const GradCheckOptions& options = {});

}  // namespace afgan
