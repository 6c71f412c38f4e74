#include "secokd/numerics/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace secokd::numerics {

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_, bool requires_grad_)
    : shape(std::move(shape_)), data(std::move(data_)), requires_grad(requires_grad_) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data size " +
                                std::to_string(data.size()));
  }
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(static_cast<size_t>(shape_numel(t.shape)), value);
  t.requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data.size()); }

bool Tensor::is_scalar() const { return numel() == 1; }

int Tensor::rows() const { return shape.size() >= 2 ? shape[0] : 1; }

int Tensor::cols() const {
  if (shape.empty()) return 1;
  return shape.back();
}

double& Tensor::at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }

double Tensor::at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

double* Tensor::row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols(); }

const double* Tensor::row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols(); }

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace secokd::numerics
