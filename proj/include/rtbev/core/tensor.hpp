#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rtbev/core/errors.hpp"

namespace rtbev {

enum class Precision { full, half };

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. A tensor in half mode holds values that
/// have been rounded through binary16 but are still stored at full width.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return shape_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  Precision precision() const noexcept { return precision_; }
  void set_precision(Precision p) noexcept { precision_ = p; }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor out(std::move(shape), data_);
    out.precision_ = precision_;
    return out;
  }

  /// Bitwise equality of shape and values; precision tags are ignored.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    for (std::size_t i = 0; i < a.data_.size(); ++i) {
      if (std::memcmp(&a.data_[i], &b.data_[i], sizeof(double)) != 0) return false;
    }
    return true;
  }

 private:
  void check_dims() const {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
  Precision precision_ = Precision::full;
};

/// FLOP counter carried by one execution context. One multiply-accumulate
/// counts as two FLOPs.
class CostMeter {
 public:
  void add(const std::string& kind, std::uint64_t flops) {
    total_ += flops;
    breakdown_[kind] += flops;
  }

  std::uint64_t total() const noexcept { return total_; }
  const std::map<std::string, std::uint64_t>& breakdown() const noexcept { return breakdown_; }

  void reset() {
    total_ = 0;
    breakdown_.clear();
  }

  void merge(const CostMeter& other) {
    for (const auto& [k, v] : other.breakdown_) add(k, v);
  }

 private:
  std::uint64_t total_ = 0;
  std::map<std::string, std::uint64_t> breakdown_;
};

}  // namespace rtbev
