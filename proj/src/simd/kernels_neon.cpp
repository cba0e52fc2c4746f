#include "hashpose/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace hashpose::simd {
namespace {

void axpy_neon(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

double dot_neon(std::size_t n, const double* x, const double* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double sum = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) sum = std::fma(x[i], y[i], sum);
  return sum;
}

void dense_forward_neon(std::size_t in, std::size_t out, const double* w, const double* b,
                        const double* x, double* y) {
  for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    if (x[i] == 0.0) continue;
    axpy_neon(out, x[i], w + i * out, y);
  }
}

void dense_backward_input_neon(std::size_t in, std::size_t out, const double* w,
                               const double* dy, double* dx) {
  for (std::size_t i = 0; i < in; ++i) dx[i] = dot_neon(out, w + i * out, dy);
}

void dense_accumulate_neon(std::size_t in, std::size_t out, const double* x, const double* dy,
                           double* dw, double* db) {
  axpy_neon(out, 1.0, dy, db);
  for (std::size_t i = 0; i < in; ++i) {
    if (x[i] == 0.0) continue;
    axpy_neon(out, x[i], dy, dw + i * out);
  }
}

void adam_update_neon(std::size_t n, double* params, const double* grads, double* m, double* v,
                      double beta1, double beta2, double step_size, double inv_sqrt_bc2,
                      double epsilon) {
  const float64x2_t b1 = vdupq_n_f64(beta1);
  const float64x2_t b2 = vdupq_n_f64(beta2);
  const float64x2_t one_b1 = vdupq_n_f64(1.0 - beta1);
  const float64x2_t one_b2 = vdupq_n_f64(1.0 - beta2);
  const float64x2_t step = vdupq_n_f64(step_size);
  const float64x2_t bc2 = vdupq_n_f64(inv_sqrt_bc2);
  const float64x2_t eps = vdupq_n_f64(epsilon);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grads + i);
    const float64x2_t mi = vaddq_f64(vmulq_f64(b1, vld1q_f64(m + i)), vmulq_f64(one_b1, g));
    const float64x2_t vi = vaddq_f64(vmulq_f64(b2, vld1q_f64(v + i)), vmulq_f64(vmulq_f64(one_b2, g), g));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t denom = vaddq_f64(vmulq_f64(vsqrtq_f64(vi), bc2), eps);
    vst1q_f64(params + i, vsubq_f64(vld1q_f64(params + i), vdivq_f64(vmulq_f64(step, mi), denom)));
  }
  for (; i < n; ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + epsilon);
  }
}

constexpr KernelTable kNeonTable{
    Isa::kNeon,          axpy_neon,           dot_neon, dense_forward_neon,
    dense_backward_input_neon, dense_accumulate_neon, adam_update_neon,
};

}  // namespace

const KernelTable* neon_kernels() { return &kNeonTable; }

}  // namespace hashpose::simd

#else

namespace hashpose::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace hashpose::simd

#endif
