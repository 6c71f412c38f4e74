#pragma once

#include <functional>

#include "secokd/numerics/tensor.hpp"

namespace secokd::numerics {

// Central-difference gradient estimate of a scalar function, one coordinate at
// a time: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps). Throws if f returns a
// non-finite value or eps <= 0.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double eps);

// Same estimate restricted to selected flat coordinates; other entries are 0.
Tensor finite_difference_grad_at(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 double eps, const std::vector<std::int64_t>& coords);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps the metric
// absolute near zero, where central differences lose relative precision.
double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1.0);

}  // namespace secokd::numerics
