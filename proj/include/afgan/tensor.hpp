#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "afgan/shape.hpp"

namespace afgan {

template <typename T>
class Tape;

// Dense row-major array of T. Element storage is shared between copies and
// treated as immutable once a tensor is published; mutable_data() copies on
// write. A tensor is differentiable iff it is bound to a node of a Tape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}, std::vector<T>(1, T(0))) {}
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }
  static Tensor ones(const Shape& shape) { return full(shape, T(1)); }
  static Tensor full(const Shape& shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, {value}); }

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }
  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  std::span<T> mutable_data();
  T operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }

  // Same storage, no tape binding.
  Tensor detach() const;
  // Same storage with a different shape of equal element count.
  Tensor view(const Shape& shape) const;

  // Bitwise equality of shape and elements.
  bool same_as(const Tensor& other) const;

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

// Gradients produced by Tape::backward, keyed by leaf node.
template <typename T>
class Gradients {
 public:
  // Gradient of `leaf`; zeros of the leaf shape when the loss does not depend on it.
  Tensor<T> of(const Tensor<T>& leaf) const;
  bool contains(const Tensor<T>& leaf) const { return grads_.count(leaf.node()) != 0; }

 private:
  friend class Tape<T>;
  const Tape<T>* tape_ = nullptr;
  std::unordered_map<int, Tensor<T>> grads_;
};

// Append-only record of executed operations. Operands always precede the
// nodes that consume them, so a reverse sweep is a valid topological order.
// Tensors bound to a tape must not outlive it; the tape is single-threaded.
template <typename T>
class Tape {
 public:
  // Receives the upstream gradient and, per operand, whether a gradient is
  // wanted; returns one tensor per operand (entries not wanted may be empty).
  using BackwardFn =
      std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_out, const std::vector<bool>& needs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable leaf holding `value`'s elements.
  Tensor<T> watch(const Tensor<T>& value);

  std::size_t size() const { return nodes_.size(); }

  Gradients<T> backward(const Tensor<T>& loss) const;

  // Binds `value` to a new node when any operand is recorded on a tape;
  // otherwise returns `value` untouched.
  static Tensor<T> record(Tensor<T> value, const std::vector<const Tensor<T>*>& operands, BackwardFn fn);

  const Shape& node_shape(int node) const { return nodes_.at(static_cast<std::size_t>(node)).shape; }

 private:
  struct Node {
    std::vector<int> inputs;  // -1 marks an untracked operand
    BackwardFn backward;
    Shape shape;
    bool leaf = false;
  };

  std::vector<Node> nodes_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace afgan
