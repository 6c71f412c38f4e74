#pragma once

namespace secokd::numerics {

// Shared row-level kernels. These are deliberately compiled out of line in a
// single translation unit: every forward path (autodiff tape, KV-cache
// inference) must run the exact same accumulation order so their results are
// bitwise identical.

double dot(const double* a, const double* b, int n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, int n);

double row_max(const double* x, int n);
double row_logsumexp(const double* x, int n);
void row_softmax(const double* x, double* out, int n);
void layer_norm_row(const double* x, const double* gain, const double* bias, double eps,
                    double* out, int n);

// c[m,n] = a[m,k] * b[n,k]^T, all row-major. Row i of c is dot(a_i, b_j) per j.
void matmul_nt(const double* a, int m, int k, const double* b, int n, double* c);

}  // namespace secokd::numerics
