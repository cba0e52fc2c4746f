#include <cmath>

#include "hashpose/simd/kernels.hpp"

namespace hashpose::simd {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += x[i] * y[i];
  return sum;
}

void dense_forward_scalar(std::size_t in, std::size_t out, const double* w, const double* b,
                          const double* x, double* y) {
  for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += xi * row[o];
  }
}

void dense_backward_input_scalar(std::size_t in, std::size_t out, const double* w,
                                 const double* dy, double* dx) {
  for (std::size_t i = 0; i < in; ++i) dx[i] = dot_scalar(out, w + i * out, dy);
}

void dense_accumulate_scalar(std::size_t in, std::size_t out, const double* x, const double* dy,
                             double* dw, double* db) {
  for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    double* row = dw + i * out;
    for (std::size_t o = 0; o < out; ++o) row[o] += xi * dy[o];
  }
}

void adam_update_scalar(std::size_t n, double* params, const double* grads, double* m, double* v,
                        double beta1, double beta2, double step_size, double inv_sqrt_bc2,
                        double epsilon) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + epsilon);
  }
}

constexpr KernelTable kScalarTable{
    Isa::kScalar,          axpy_scalar,           dot_scalar, dense_forward_scalar,
    dense_backward_input_scalar, dense_accumulate_scalar, adam_update_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace hashpose::simd
