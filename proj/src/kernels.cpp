#include "secokd/numerics/kernels.hpp"

#include <cmath>

#include "secokd/numerics/parallel.hpp"

namespace secokd::numerics {

double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; k < n; ++k) s += a[k] * b[k];
  return s;
}

void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double row_max(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) {
    if (x[i] > m) m = x[i];
  }
  return m;
}

double row_logsumexp(const double* x, int n) {
  const double m = row_max(x, n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

void row_softmax(const double* x, double* out, int n) {
  const double m = row_max(x, n);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    s += out[i];
  }
  const double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

void layer_norm_row(const double* x, const double* gain, const double* bias, double eps,
                    double* out, int n) {
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += x[i];
  mean /= n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    var += d * d;
  }
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  for (int i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

void matmul_nt(const double* a, int m, int k, const double* b, int n, double* c) {
  parallel_for(m, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] = dot(arow, b + static_cast<std::int64_t>(j) * k, k);
    }
  });
}

}  // namespace secokd::numerics
