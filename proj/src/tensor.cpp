#include "softflow/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace softflow {

namespace {

int64_t shape_product(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: dimensions must be positive");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw std::invalid_argument("Tensor: shape must be non-empty");
  if (shape_product(shape_) != static_cast<int64_t>(values_.size()))
    throw std::invalid_argument("Tensor: shape/value count mismatch");
  check_finite("construction");
}

Tensor Tensor::zeros(std::vector<int> shape) {
  int64_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

int Tensor::rows() const {
  if (!is_matrix()) throw std::invalid_argument("Tensor: rows() on non-matrix " + shape_str());
  return shape_[0];
}

int Tensor::cols() const {
  if (!is_matrix()) throw std::invalid_argument("Tensor: cols() on non-matrix " + shape_str());
  return shape_[1];
}

double Tensor::at(int r, int c) const {
  return values_[static_cast<size_t>(r) * cols() + c];
}

double& Tensor::at(int r, int c) {
  return values_[static_cast<size_t>(r) * cols() + c];
}

double Tensor::item() const {
  if (values_.size() != 1) throw std::invalid_argument("Tensor: item() on shape " + shape_str());
  return values_[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

void Tensor::check_finite(const char* context) const {
  for (double v : values_) {
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string("Tensor: non-finite value at ") + context);
  }
}

}  // namespace softflow
