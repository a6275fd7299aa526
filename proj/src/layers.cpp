#include "afgan/layers.hpp"

#include <sstream>

#include "afgan/error.hpp"
#include "afgan/rng.hpp"

namespace afgan {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv_transpose2d: return "conv_transpose2d";
    case LayerKind::batch_norm2d: return "batchnorm2d";
    case LayerKind::activation: return "activation";
    case LayerKind::reshape: return "reshape";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

std::int64_t ConvSpec::out_extent(std::int64_t in, int axis) const {
  const auto a = static_cast<std::size_t>(axis);
  return transposed ? conv_transpose_out_extent(in, kernel[a], stride[a], padding[a])
                    : conv_out_extent(in, kernel[a], stride[a], padding[a]);
}

void ConvSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) throw ConfigError("convolution channel counts must be >= 1");
  for (std::size_t a = 0; a < 2; ++a) {
    if (kernel[a] < 1 || stride[a] < 1 || padding[a] < 0) {
      throw ConfigError("convolution kernel/stride must be >= 1 and padding >= 0");
    }
  }
}

template <typename T>
const Tensor<T>& Parameter<T>::active() const {
  if (is_bound) return bound;
  if (!materialized()) throw ContractError("parameter " + name + " used before initialization");
  return value;
}

template <typename T>
BatchNormState<T>::BatchNormState(const std::string& prefix, std::int64_t channels, double momentum_, double eps_)
    : gamma(prefix + ".gamma", Tensor<T>::ones(Shape{channels})),
      beta(prefix + ".beta", Tensor<T>::zeros(Shape{channels})),
      running_mean(Tensor<T>::zeros(Shape{channels})),
      running_var(Tensor<T>::ones(Shape{channels})),
      momentum(momentum_),
      eps(eps_) {}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LayerParams<T>& p) {
  const auto& w = p.weight.active();
  if (x.shape().rank() != 2 || w.shape().rank() != 2 || x.shape()[1] != w.shape()[0]) {
    throw ShapeError("linear input " + x.shape().str() + " does not match weight " + w.shape().str());
  }
  Tensor<T> y = matmul(x, w);
  if (const auto* b = p.bias_tensor()) y = add(y, *b);
  return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const LayerParams<T>& p) {
  if (x.shape().rank() != 4 || x.shape()[1] != spec.in_channels) {
    throw ShapeError("conv2d expects (N, " + std::to_string(spec.in_channels) + ", H, W), got " + x.shape().str());
  }
  return conv2d(x, p.weight.active(), p.bias_tensor(), spec.geometry());
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const ConvSpec& spec, const LayerParams<T>& p) {
  if (x.shape().rank() != 4 || x.shape()[1] != spec.in_channels) {
    throw ShapeError("conv_transpose2d expects (N, " + std::to_string(spec.in_channels) + ", H, W), got " +
                     x.shape().str());
  }
  return conv_transpose2d(x, p.weight.active(), p.bias_tensor(), spec.geometry());
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& state, Mode mode) {
  if (mode == Mode::eval) {
    return batch_norm_eval(x, state.gamma.active(), state.beta.active(), state.running_mean, state.running_var,
                           state.eps);
  }
  BatchStats stats;
  Tensor<T> y = batch_norm_train(x, state.gamma.active(), state.beta.active(), state.eps, &stats);
  const double m = state.momentum;
  const double unbias = static_cast<double>(stats.count) / static_cast<double>(stats.count - 1);
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();
  for (std::size_t c = 0; c < rm.size(); ++c) {
    rm[c] = static_cast<T>((1.0 - m) * rm[c] + m * stats.mean[c]);
    rv[c] = static_cast<T>((1.0 - m) * rv[c] + m * stats.var[c] * unbias);
  }
  return y;
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act, double slope) {
  switch (act) {
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, slope);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  throw ContractError("unknown activation");
}

template <typename T>
Linear<T>::Linear(std::string name, std::int64_t in, std::int64_t out, bool bias)
    : Layer<T>(std::move(name)), in_(in), out_(out) {
  params_.weight = Parameter<T>(this->name() + ".weight", Shape{in, out});
  if (bias) params_.bias = Parameter<T>(this->name() + ".bias", Shape{out});
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& input) const {
  if (input.rank() != 2 || input[1] != in_) {
    throw ShapeError(this->name() + " expects (N, " + std::to_string(in_) + "), got " + input.str());
  }
  return Shape{input[0], out_};
}

template <typename T>
std::vector<Parameter<T>*> Linear<T>::parameters() {
  std::vector<Parameter<T>*> out{&params_.weight};
  if (params_.bias) out.push_back(&*params_.bias);
  return out;
}

template <typename T>
std::string Linear<T>::describe() const {
  return "linear " + std::to_string(in_) + " -> " + std::to_string(out_) + (params_.bias ? "" : " (no bias)");
}

template <typename T>
Conv<T>::Conv(std::string name, const ConvSpec& spec, bool bias) : Layer<T>(std::move(name)), spec_(spec) {
  spec_.validate();
  const Shape wshape = spec.transposed
                           ? Shape{spec.in_channels, spec.out_channels, spec.kernel[0], spec.kernel[1]}
                           : Shape{spec.out_channels, spec.in_channels, spec.kernel[0], spec.kernel[1]};
  params_.weight = Parameter<T>(this->name() + ".weight", wshape);
  if (bias) params_.bias = Parameter<T>(this->name() + ".bias", Shape{spec.out_channels});
}

template <typename T>
Tensor<T> Conv<T>::forward(const Tensor<T>& x, Mode) {
  return spec_.transposed ? conv_transpose2d(x, spec_, params_) : conv2d(x, spec_, params_);
}

template <typename T>
Shape Conv<T>::output_shape(const Shape& input) const {
  if (input.rank() != 4 || input[1] != spec_.in_channels) {
    throw ShapeError(this->name() + " expects (N, " + std::to_string(spec_.in_channels) + ", H, W), got " +
                     input.str());
  }
  return Shape{input[0], spec_.out_channels, spec_.out_extent(input[2], 0), spec_.out_extent(input[3], 1)};
}

template <typename T>
std::vector<Parameter<T>*> Conv<T>::parameters() {
  std::vector<Parameter<T>*> out{&params_.weight};
  if (params_.bias) out.push_back(&*params_.bias);
  return out;
}

template <typename T>
std::string Conv<T>::describe() const {
  std::ostringstream os;
  os << to_string(kind()) << ' ' << spec_.in_channels << " -> " << spec_.out_channels << " k" << spec_.kernel[0]
     << 'x' << spec_.kernel[1] << " s" << spec_.stride[0] << " p" << spec_.padding[0]
     << (params_.bias ? "" : " (no bias)");
  return os.str();
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::int64_t channels, double momentum, double eps)
    : Layer<T>(std::move(name)), state_(this->name(), channels, momentum, eps) {}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& input) const {
  if (input.rank() != 4 || input[1] != state_.gamma.value.numel()) {
    throw ShapeError(this->name() + " expects (N, " + std::to_string(state_.gamma.value.numel()) + ", H, W), got " +
                     input.str());
  }
  return input;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> BatchNorm2d<T>::buffers() {
  return {{this->name() + ".running_mean", &state_.running_mean}, {this->name() + ".running_var", &state_.running_var}};
}

template <typename T>
std::string BatchNorm2d<T>::describe() const {
  return "batchnorm2d " + std::to_string(state_.gamma.value.numel());
}

template <typename T>
std::string ActivationLayer<T>::describe() const {
  std::string s(to_string(act_));
  if (act_ == Activation::leaky_relu) {
    std::ostringstream os;
    os << s << '(' << slope_ << ')';
    return os.str();
  }
  return s;
}

template <typename T>
Shape Reshape<T>::output_shape(const Shape& input) const {
  std::vector<std::int64_t> dims{input.rank() ? input[0] : 1};
  dims.insert(dims.end(), sample_.dims().begin(), sample_.dims().end());
  Shape out(dims);
  if (out.numel() != input.numel()) {
    throw ShapeError(this->name() + " cannot reshape " + input.str() + " to " + out.str());
  }
  return out;
}

template <typename T>
Shape Flatten<T>::output_shape(const Shape& input) const {
  if (input.rank() < 1) throw ShapeError(this->name() + " needs a batch dimension");
  return Shape{input[0], input.numel() / input[0]};
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, mode_);
  return h;
}

template <typename T>
std::vector<Shape> Network<T>::output_shapes(const Shape& input) const {
  std::vector<Shape> out;
  Shape s = input;
  for (const auto& layer : layers_) {
    s = layer->output_shape(s);
    out.push_back(s);
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_)
    for (auto* p : layer->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> Network<T>::buffers() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& layer : layers_)
    for (auto& b : layer->buffers()) out.push_back(b);
  return out;
}

template <typename T>
void Network<T>::bind(Tape<T>& tape) {
  for (auto* p : parameters()) {
    p->bound = tape.watch(p->active());
    p->is_bound = true;
  }
}

template <typename T>
void Network<T>::unbind() {
  for (auto* p : parameters()) {
    p->bound = Tensor<T>();
    p->is_bound = false;
  }
}

template <typename T>
void Network<T>::materialize() {
  for (auto* p : parameters()) p->materialize();
}

template <typename T>
void Network<T>::zero_grads() {
  for (auto* p : parameters()) p->grad = Tensor<T>::zeros(p->shape);
}

template <typename T>
void Network<T>::accumulate_grads(const Gradients<T>& grads) {
  for (auto* p : parameters()) {
    if (!p->is_bound) throw ContractError("accumulate_grads() on unbound parameter " + p->name);
    if (!grads.contains(p->bound)) continue;
    const Tensor<T> g = grads.of(p->bound);
    auto dst = p->grad.mutable_data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed) {
  Rng rng(seed);
  net.materialize();
  auto fill_normal = [&rng](Tensor<T>& t, double mean, double stddev) {
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal(mean, stddev));
  };
  for (const auto& layer : net.layers()) {
    switch (layer->kind()) {
      case LayerKind::linear:
      case LayerKind::conv2d:
      case LayerKind::conv_transpose2d: {
        auto params = layer->parameters();
        fill_normal(params[0]->value, 0.0, 0.02);
        if (params.size() > 1) params[1]->value = Tensor<T>::zeros(params[1]->value.shape());
        break;
      }
      case LayerKind::batch_norm2d: {
        auto& st = static_cast<BatchNorm2d<T>&>(*layer).state();
        fill_normal(st.gamma.value, 1.0, 0.02);
        st.beta.value = Tensor<T>::zeros(st.beta.value.shape());
        st.running_mean = Tensor<T>::zeros(st.running_mean.shape());
        st.running_var = Tensor<T>::ones(st.running_var.shape());
        break;
      }
      default:
        break;
    }
  }
  net.zero_grads();
}

#define AFGAN_INSTANTIATE_LAYERS(T)                                                          \
  template struct Parameter<T>;                                                              \
  template struct BatchNormState<T>;                                                         \
  template Tensor<T> linear<T>(const Tensor<T>&, const LayerParams<T>&);                     \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvSpec&, const LayerParams<T>&);    \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const ConvSpec&,                  \
                                         const LayerParams<T>&);                             \
  template Tensor<T> batchnorm2d<T>(const Tensor<T>&, BatchNormState<T>&, Mode);             \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation, double);                      \
  template class Linear<T>;                                                                  \
  template class Conv<T>;                                                                    \
  template class BatchNorm2d<T>;                                                             \
  template class ActivationLayer<T>;                                                         \
  template class Reshape<T>;                                                                 \
  template class Flatten<T>;                                                                 \
  template class Network<T>;                                                                 \
  template void init_weights<T>(Network<T>&, std::uint64_t);

AFGAN_INSTANTIATE_LAYERS(float)
AFGAN_INSTANTIATE_LAYERS(double)

}  // namespace afgan
