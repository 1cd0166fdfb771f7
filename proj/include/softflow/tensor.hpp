#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace softflow {

// Dense row-major tensor of 64-bit floats. Construction validates that the
// element count matches the shape and that every value is finite; NaN/Inf
// never enter the numeric core unnoticed.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape);
  static Tensor scalar(double v);

  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  int64_t size() const { return static_cast<int64_t>(values_.size()); }
  bool is_matrix() const { return shape_.size() == 2; }
  int rows() const;
  int cols() const;

  double at(int r, int c) const;
  double& at(int r, int c);
  double item() const;  // requires exactly one element

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  // Re-checks the finiteness invariant after in-place mutation of values().
  void check_finite(const char* context) const;

 private:
  std::vector<int> shape_;
  std::vector<double> values_;
};

}  // namespace softflow
