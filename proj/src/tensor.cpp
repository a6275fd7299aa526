#include "afgan/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "afgan/error.hpp"

namespace afgan {

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(values))) {
  if (static_cast<std::int64_t>(data_->size()) != shape_.numel()) {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                     " elements, got " + std::to_string(data_->size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  return Tensor(shape, std::vector<T>(static_cast<std::size_t>(shape.numel()), value));
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (tape_ != nullptr) throw ContractError("cannot mutate a tensor recorded on a tape");
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
  return {data_->data(), data_->size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_.str());
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::view(const Shape& shape) const {
  if (shape.numel() != numel()) {
    throw ShapeError("cannot view " + shape_.str() + " as " + shape.str());
  }
  Tensor t = detach();
  t.shape_ = shape;
  return t;
}

template <typename T>
bool Tensor<T>::same_as(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(data_->data(), other.data_->data(), data_->size() * sizeof(T)) == 0;
}

template <typename T>
Tensor<T> Gradients<T>::of(const Tensor<T>& leaf) const {
  if (leaf.tape() != tape_ || leaf.node() < 0) {
    throw ContractError("gradient requested for a tensor that is not a leaf of this tape");
  }
  auto it = grads_.find(leaf.node());
  if (it != grads_.end()) return it->second;
  return Tensor<T>::zeros(leaf.shape());
}

template <typename T>
Tensor<T> Tape<T>::watch(const Tensor<T>& value) {
  Tensor<T> t = value.detach();
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, nullptr, value.shape(), true});
  return t;
}

template <typename T>
Tensor<T> Tape<T>::record(Tensor<T> value, const std::vector<const Tensor<T>*>& operands, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const auto* op : operands) {
    if (op->tape_ == nullptr) continue;
    if (tape != nullptr && tape != op->tape_) throw ContractError("operands recorded on different tapes");
    tape = op->tape_;
  }
  if (tape == nullptr) return value.detach();

  Node node;
  node.shape = value.shape();
  node.backward = std::move(fn);
  node.inputs.reserve(operands.size());
  for (const auto* op : operands) node.inputs.push_back(op->tape_ ? op->node_ : -1);

  value = value.detach();
  value.tape_ = tape;
  value.node_ = static_cast<int>(tape->nodes_.size());
  tape->nodes_.push_back(std::move(node));
  return value;
}

namespace {

template <typename T>
void accumulate(std::vector<Tensor<T>>& slots, std::vector<bool>& present, int index, const Tensor<T>& g) {
  auto i = static_cast<std::size_t>(index);
  if (!present[i]) {
    slots[i] = g.detach();
    present[i] = true;
    return;
  }
  if (slots[i].shape() != g.shape()) {
    throw ShapeError("gradient shape " + g.shape().str() + " does not match " + slots[i].shape().str());
  }
  auto dst = slots[i].mutable_data();
  auto src = g.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

}  // namespace

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) const {
  if (loss.tape() != this || loss.node() < 0) {
    throw ContractError("backward() on a tensor that is not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + loss.shape().str());
  }

  const auto end = static_cast<std::size_t>(loss.node()) + 1;
  std::vector<Tensor<T>> grads(end);
  std::vector<bool> present(end, false);
  grads[end - 1] = Tensor<T>::ones(loss.shape());
  present[end - 1] = true;

  Gradients<T> out;
  out.tape_ = this;
  for (std::size_t i = end; i-- > 0;) {
    if (!present[i]) continue;
    const Node& node = nodes_[i];
    if (node.leaf) {
      out.grads_.emplace(static_cast<int>(i), std::move(grads[i]));
      continue;
    }
    std::vector<bool> needs(node.inputs.size());
    for (std::size_t k = 0; k < needs.size(); ++k) needs[k] = node.inputs[k] >= 0;
    auto in_grads = node.backward(grads[i], needs);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!needs[k]) continue;
      const int src = node.inputs[k];
      if (nodes_[static_cast<std::size_t>(src)].shape != in_grads[k].shape()) {
        throw ShapeError("backward rule produced gradient " + in_grads[k].shape().str() + " for operand " +
                         nodes_[static_cast<std::size_t>(src)].shape.str());
      }
      accumulate(grads, present, src, in_grads[k]);
    }
    grads[i] = Tensor<T>();  // release early
  }
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace afgan
