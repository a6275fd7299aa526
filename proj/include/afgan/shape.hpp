#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace afgan {

// Ordered tensor extents. 4-D tensors are laid out (batch, channels, height, width).
// Rank 0 is a scalar with one element.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::int64_t numel() const;

  bool operator==(const Shape& other) const = default;

  std::string str() const;

 private:
  std::vector<std::int64_t> dims_;
};

}  // namespace afgan
