#include "afgan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "afgan/error.hpp"
#include "afgan/rng.hpp"

namespace afgan {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  const Tensor<double> y = f(inputs);
  if (y.numel() != 1) throw ContractError("grad_check needs a scalar-valued function, got " + y.shape().str());
  return y.item();
}

std::vector<std::int64_t> probe_indices(std::int64_t numel, const GradCheckOptions& opt, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(numel));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  if (opt.max_coordinates <= 0 || opt.max_coordinates >= numel) return idx;
  // Partial Fisher-Yates: the first k slots become a uniform sample.
  const auto k = static_cast<std::size_t>(opt.max_coordinates);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& points,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.tolerance = options.tolerance;

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Tensor<double>> leaves;
    for (const auto& p : points) leaves.push_back(tape.watch(p));
    const Tensor<double> y = f(leaves);
    if (y.numel() != 1) throw ContractError("grad_check needs a scalar-valued function, got " + y.shape().str());
    if (!std::isfinite(y.item())) throw NumericalError("grad_check: function value is not finite at the base point");
    if (y.tape() == nullptr) {
      for (const auto& p : points) analytic.push_back(Tensor<double>::zeros(p.shape()));
    } else {
      const auto grads = tape.backward(y);
      for (const auto& leaf : leaves) analytic.push_back(grads.of(leaf));
    }
  }

  Rng rng(options.seed);
  std::vector<Tensor<double>> work(points.begin(), points.end());
  for (std::size_t in = 0; in < points.size(); ++in) {
    for (const std::int64_t i : probe_indices(points[in].numel(), options, rng)) {
      const auto k = static_cast<std::size_t>(i);
      const double x0 = points[in][i];
      work[in] = points[in].detach();
      work[in].mutable_data()[k] = x0 + options.step;
      const double fp = evaluate(f, work);
      work[in].mutable_data()[k] = x0 - options.step;
      const double fm = evaluate(f, work);
      work[in] = points[in];

      const double a = analytic[in][i];
      const double n = (fp - fm) / (2.0 * options.step);
      if (!std::isfinite(a) || !std::isfinite(n)) {
        throw NumericalError("grad_check: non-finite value at input " + std::to_string(in) + " coordinate " +
                             std::to_string(i) + " (analytic " + std::to_string(a) + ", numeric " +
                             std::to_string(n) + ")");
      }
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
      report.coordinates.push_back({in, i, a, n, rel});
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f, const Tensor<double>& point,
                           const GradCheckOptions& options) {
  return grad_check([&f](const std::vector<Tensor<double>>& in) { return f(in[0]); },
                    std::vector<Tensor<double>>{point}, options);
}

}  // namespace afgan
