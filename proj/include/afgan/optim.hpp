#pragma once

#include <cstdint>
#include <vector>

#include "afgan/layers.hpp"
#include "afgan/tensor.hpp"

namespace afgan {

struct AdamHyper {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// One Adam update at step t (1-based) in place on param, m and v. Throws
// NumericalError if grad holds a non-finite value; nothing is modified then.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::int64_t t,
                 const AdamHyper& hyper);

// Moments for every parameter of one network, in Network::parameters() order.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(Network<T>& net, const AdamHyper& hyper);

  // Applies one update from each parameter's accumulated grad; t advances by 1.
  void step(Network<T>& net);

  const AdamHyper& hyper() const { return hyper_; }
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

 private:
  AdamHyper hyper_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace afgan
