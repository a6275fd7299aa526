#include "afgan/optim.hpp"

#include <cmath>

#include "afgan/error.hpp"

namespace afgan {

void AdamHyper::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam_eps must be > 0");
}

template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::int64_t t,
                 const AdamHyper& hyper) {
  if (!(grad.shape() == param.shape() && m.shape() == param.shape() && v.shape() == param.shape())) {
    throw ShapeError("adam_update: param " + param.shape().str() + ", grad " + grad.shape().str() + ", m " +
                     m.shape().str() + ", v " + v.shape().str());
  }
  if (t < 1) throw ContractError("adam_update: step must be >= 1");
  const auto g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(static_cast<double>(g[i]))) {
      throw NumericalError("non-finite gradient at element " + std::to_string(i));
    }
  }
  const T b1 = static_cast<T>(hyper.beta1), b2 = static_cast<T>(hyper.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(hyper.beta1, static_cast<double>(t)));
  const T c2 = static_cast<T>(1.0 - std::pow(hyper.beta2, static_cast<double>(t)));
  const T lr = static_cast<T>(hyper.learning_rate), eps = static_cast<T>(hyper.eps);
  auto p = param.mutable_data();
  auto mm = m.mutable_data();
  auto vv = v.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    mm[i] = b1 * mm[i] + (T(1) - b1) * g[i];
    vv[i] = b2 * vv[i] + (T(1) - b2) * g[i] * g[i];
    const T m_hat = mm[i] / c1;
    const T v_hat = vv[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
Adam<T>::Adam(Network<T>& net, const AdamHyper& hyper) : hyper_(hyper) {
  hyper_.validate();
  for (auto* p : net.parameters()) {
    m_.push_back(Tensor<T>::zeros(p->shape));
    v_.push_back(Tensor<T>::zeros(p->shape));
  }
}

template <typename T>
void Adam<T>::step(Network<T>& net) {
  auto params = net.parameters();
  if (params.size() != m_.size()) throw ContractError("Adam state does not match network " + net.name());
  for (auto* p : params) {
    for (auto g : p->grad.data()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericalError("non-finite gradient in " + p->name);
    }
  }
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) adam_update(params[i]->value, params[i]->grad, m_[i], v_[i], t_, hyper_);
}

template void adam_update<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, std::int64_t,
                                 const AdamHyper&);
template void adam_update<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&,
                                  std::int64_t, const AdamHyper&);
template class Adam<float>;
template class Adam<double>;

}  // namespace afgan
