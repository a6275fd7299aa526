#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "afgan/ops.hpp"
#include "afgan/tensor.hpp"

namespace afgan {

enum class Mode { train, eval };

enum class LayerKind { linear, conv2d, conv_transpose2d, batch_norm2d, activation, reshape, flatten };

enum class Activation { relu, leaky_relu, tanh, sigmoid };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  std::array<int, 2> kernel{4, 4};
  std::array<int, 2> stride{2, 2};
  std::array<int, 2> padding{1, 1};
  bool transposed = false;

  // kernel (4, 4), stride (2, 2), padding (1, 1): the only padding that makes
  // k4/s2 exactly halve or double an even extent.
  static ConvSpec halving(int in, int out) { return {in, out, {4, 4}, {2, 2}, {1, 1}, false}; }
  static ConvSpec doubling(int in, int out) { return {in, out, {4, 4}, {2, 2}, {1, 1}, true}; }

  ConvGeometry geometry() const { return {stride, padding}; }
  std::int64_t out_extent(std::int64_t in, int axis) const;
  void validate() const;
};

// Trainable tensor with a stable checkpoint name. Storage is allocated lazily
// (materialize / init_weights) so full-sized networks can be inspected by
// shape alone. While bound to a tape the forward pass reads `bound` (a tape
// leaf) instead of `value`.
template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> bound;
  bool is_bound = false;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), shape(std::move(s)) {}
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), shape(v.shape()), value(std::move(v)), grad(Tensor<T>::zeros(shape)) {}

  bool materialized() const { return value.shape() == shape; }
  void materialize() {
    if (materialized()) return;
    value = Tensor<T>::zeros(shape);
    grad = Tensor<T>::zeros(shape);
  }
  const Tensor<T>& active() const;
};

// FC weights (in, out); conv weights (out, in, kh, kw); transposed conv (in, out, kh, kw).
template <typename T>
struct LayerParams {
  Parameter<T> weight;
  std::optional<Parameter<T>> bias;

  const Tensor<T>* bias_tensor() const { return bias ? &bias->active() : nullptr; }
};

template <typename T>
struct BatchNormState {
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  BatchNormState(const std::string& prefix, std::int64_t channels, double momentum = 0.1, double eps = 1e-5);
};

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const LayerParams<T>& p);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvSpec& spec, const LayerParams<T>& p);

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const ConvSpec& spec, const LayerParams<T>& p);

// Train mode normalizes with batch statistics and folds them into the running
// estimates (unbiased variance); eval mode reads the running estimates only.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNormState<T>& state, Mode mode);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act, double slope = 0.2);

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  // Input and output shapes include the batch dimension.
  virtual Shape output_shape(const Shape& input) const = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
  virtual std::string describe() const { return std::string(to_string(kind())); }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, std::int64_t in, std::int64_t out, bool bias = true);
  LayerKind kind() const override { return LayerKind::linear; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return linear(x, params_); }
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter<T>*> parameters() override;
  std::string describe() const override;

  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }
  LayerParams<T>& params() { return params_; }

 private:
  std::int64_t in_, out_;
  LayerParams<T> params_;
};

template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(std::string name, const ConvSpec& spec, bool bias);
  LayerKind kind() const override { return spec_.transposed ? LayerKind::conv_transpose2d : LayerKind::conv2d; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override;
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter<T>*> parameters() override;
  std::string describe() const override;

  const ConvSpec& spec() const { return spec_; }
  bool has_bias() const { return params_.bias.has_value(); }
  LayerParams<T>& params() { return params_; }

 private:
  ConvSpec spec_;
  LayerParams<T> params_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::string name, std::int64_t channels, double momentum = 0.1, double eps = 1e-5);
  LayerKind kind() const override { return LayerKind::batch_norm2d; }
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override { return batchnorm2d(x, state_, mode); }
  Shape output_shape(const Shape& input) const override;
  std::vector<Parameter<T>*> parameters() override { return {&state_.gamma, &state_.beta}; }
  std::vector<std::pair<std::string, Tensor<T>*>> buffers() override;
  std::string describe() const override;

  BatchNormState<T>& state() { return state_; }
  std::int64_t channels() const { return state_.gamma.value.numel(); }

 private:
  BatchNormState<T> state_;
};

template <typename T>
class ActivationLayer final : public Layer<T> {
 public:
  ActivationLayer(std::string name, Activation act, double slope = 0.2)
      : Layer<T>(std::move(name)), act_(act), slope_(slope) {}
  LayerKind kind() const override { return LayerKind::activation; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return activate(x, act_, slope_); }
  Shape output_shape(const Shape& input) const override { return input; }
  std::string describe() const override;

  Activation activation() const { return act_; }

 private:
  Activation act_;
  double slope_;
};

// Reinterprets each sample as `sample_shape` (batch dimension preserved).
template <typename T>
class Reshape final : public Layer<T> {
 public:
  Reshape(std::string name, Shape sample_shape) : Layer<T>(std::move(name)), sample_(std::move(sample_shape)) {}
  LayerKind kind() const override { return LayerKind::reshape; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return reshape(x, output_shape(x.shape())); }
  Shape output_shape(const Shape& input) const override;

 private:
  Shape sample_;
};

template <typename T>
class Flatten final : public Layer<T> {
 public:
  explicit Flatten(std::string name) : Layer<T>(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::flatten; }
  Tensor<T> forward(const Tensor<T>& x, Mode) override { return reshape(x, output_shape(x.shape())); }
  Shape output_shape(const Shape& input) const override;
};

// Ordered stack of layers. Parameter names are "<network>.<layer>.<param>".
template <typename T>
class Network {
 public:
  explicit Network(std::string name = "net") : name_(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(const std::string& layer_name, Args&&... args) {
    auto layer = std::make_unique<L>(name_ + "." + layer_name, std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(const Tensor<T>& x);
  // Output shape of every layer in order, computed without touching data.
  std::vector<Shape> output_shapes(const Shape& input) const;

  // Allocates zero storage for every parameter that has none yet.
  void materialize();

  void set_mode(Mode mode) { mode_ = mode; }
  Mode mode() const { return mode_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<std::pair<std::string, Tensor<T>*>> buffers();

  void bind(Tape<T>& tape);
  void unbind();
  void zero_grads();
  void accumulate_grads(const Gradients<T>& grads);

  const std::string& name() const { return name_; }
  const std::vector<std::unique_ptr<Layer<T>>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Mode mode_ = Mode::train;
};

// Binds a network's parameters to a tape for the lifetime of the guard.
template <typename T>
class TapeBinding {
 public:
  TapeBinding(Network<T>& net, Tape<T>& tape) : net_(net) { net_.bind(tape); }
  ~TapeBinding() { net_.unbind(); }
  TapeBinding(const TapeBinding&) = delete;
  TapeBinding& operator=(const TapeBinding&) = delete;

 private:
  Network<T>& net_;
};

// Conv/FC weights ~ N(0, 0.02), biases 0, batch-norm gamma ~ N(1, 0.02), beta 0,
// running mean 0 and variance 1. Deterministic in `seed`.
template <typename T>
void init_weights(Network<T>& net, std::uint64_t seed);

}  // namespace afgan
