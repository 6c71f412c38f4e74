#include "secokd/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace secokd::numerics {

namespace {

double eval_checked(const std::function<double(const Tensor&)>& f, const Tensor& x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw std::runtime_error("finite_difference_grad: non-finite f value");
  return v;
}

}  // namespace

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double eps) {
  std::vector<std::int64_t> coords(static_cast<size_t>(x.numel()));
  std::iota(coords.begin(), coords.end(), 0);
  return finite_difference_grad_at(f, x, eps, coords);
}

Tensor finite_difference_grad_at(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 double eps, const std::vector<std::int64_t>& coords) {
  if (eps <= 0.0) throw std::invalid_argument("finite_difference_grad: eps must be positive");
  Tensor grad = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (std::int64_t c : coords) {
    const auto i = static_cast<size_t>(c);
    const double orig = probe.data[i];
    probe.data[i] = orig + eps;
    const double fp = eval_checked(f, probe);
    probe.data[i] = orig - eps;
    const double fm = eval_checked(f, probe);
    probe.data[i] = orig;
    grad.data[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double max_rel_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_rel_error: shape mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double denom = std::max({std::fabs(a.data[i]), std::fabs(b.data[i]), floor});
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace secokd::numerics
