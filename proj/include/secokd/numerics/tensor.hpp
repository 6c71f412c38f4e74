#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace secokd::numerics {

// Dense row-major tensor of 64-bit reals. Flat data, shape product == data size.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> shape_, std::vector<double> data_, bool requires_grad_ = false);

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  std::int64_t numel() const;
  bool is_scalar() const;

  // 2-d accessors; a 1-d tensor counts as a single row.
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;
  double* row_ptr(int r);
  const double* row_ptr(int r) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace secokd::numerics
