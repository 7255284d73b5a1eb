#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcorrupt/error.hpp"

namespace pcorrupt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Dense row-major tensor. The checked constructor is meant for external
// inputs: it rejects zero extents, size mismatches and non-finite entries.
template <class Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_volume(shape_), Real(0)) {
    for (auto d : shape_) {
      if (d == 0) throw ValidationError("tensor extent must be positive, got " + shape_string(shape_));
    }
  }

  Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
      if (d == 0) throw ValidationError("tensor extent must be positive, got " + shape_string(shape_));
    }
    if (shape_volume(shape_) != data_.size()) {
      throw ValidationError("tensor shape " + shape_string(shape_) + " needs " +
                            std::to_string(shape_volume(shape_)) + " values, got " +
                            std::to_string(data_.size()));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(static_cast<double>(data_[i]))) {
        throw ValidationError("tensor entry " + std::to_string(i) + " is not finite");
      }
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::vector<Real>& storage() { return data_; }
  const std::vector<Real>& storage() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  const Real& operator[](std::size_t i) const { return data_[i]; }

  // Same data, new shape with equal volume.
  Tensor reshaped(Shape shape) const {
    if (shape_volume(shape) != data_.size()) {
      throw ValidationError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  bool all_finite() const {
    for (const auto& x : data_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

}  // namespace pcorrupt
