// Built with -mavx2 -mfma. Nothing here may run before kernels.cpp has
// confirmed CPU support; the accessor only hands out a pointer.

#include "hashpose/simd/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace hashpose::simd {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) sum = std::fma(x[i], y[i], sum);
  return sum;
}

void dense_forward_avx2(std::size_t in, std::size_t out, const double* w, const double* b,
                        const double* x, double* y) {
  for (std::size_t o = 0; o < out; ++o) y[o] = b[o];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    axpy_avx2(out, xi, w + i * out, y);
  }
}

void dense_backward_input_avx2(std::size_t in, std::size_t out, const double* w,
                               const double* dy, double* dx) {
  for (std::size_t i = 0; i < in; ++i) dx[i] = dot_avx2(out, w + i * out, dy);
}

void dense_accumulate_avx2(std::size_t in, std::size_t out, const double* x, const double* dy,
                           double* dw, double* db) {
  axpy_avx2(out, 1.0, dy, db);
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    axpy_avx2(out, xi, dy, dw + i * out);
  }
}

void adam_update_avx2(std::size_t n, double* params, const double* grads, double* m, double* v,
                      double beta1, double beta2, double step_size, double inv_sqrt_bc2,
                      double epsilon) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d one_b1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d one_b2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d step = _mm256_set1_pd(step_size);
  const __m256d bc2 = _mm256_set1_pd(inv_sqrt_bc2);
  const __m256d eps = _mm256_set1_pd(epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grads + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(one_b1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(one_b2, g), g));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_mul_pd(_mm256_sqrt_pd(vi), bc2), eps);
    const __m256d update = _mm256_div_pd(_mm256_mul_pd(step, mi), denom);
    _mm256_storeu_pd(params + i, _mm256_sub_pd(_mm256_loadu_pd(params + i), update));
  }
  for (; i < n; ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + epsilon);
  }
}

constexpr KernelTable kAvx2Table{
    Isa::kAvx2,          axpy_avx2,           dot_avx2, dense_forward_avx2,
    dense_backward_input_avx2, dense_accumulate_avx2, adam_update_avx2,
};

}  // namespace

const KernelTable* avx2_table_unchecked() { return &kAvx2Table; }

}  // namespace hashpose::simd

#else

namespace hashpose::simd {
const KernelTable* avx2_table_unchecked() { return nullptr; }
}  // namespace hashpose::simd

#endif
