#pragma once

// Dense inner loops used by the decoder and the optimizer. Every entry has a
// scalar reference implementation; vector variants are picked once at startup
// from the CPU feature set and must agree with the reference to rounding.

#include <cstddef>
#include <string_view>

namespace hashpose::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);

  double (*dot)(std::size_t n, const double* x, const double* y);

  // Weights are stored input-major: w[i * out + o].
  // y[o] = b[o] + sum_i x[i] * w[i * out + o]
  void (*dense_forward)(std::size_t in, std::size_t out, const double* w, const double* b,
                        const double* x, double* y);

  // dx[i] = sum_o w[i * out + o] * dy[o]
  void (*dense_backward_input)(std::size_t in, std::size_t out, const double* w,
                               const double* dy, double* dx);

  // dw[i * out + o] += x[i] * dy[o]; db[o] += dy[o]
  void (*dense_accumulate)(std::size_t in, std::size_t out, const double* x, const double* dy,
                           double* dw, double* db);

  // Bias-corrected Adam. step_size = lr / (1 - beta1^t),
  // inv_sqrt_bc2 = 1 / sqrt(1 - beta2^t).
  void (*adam_update)(std::size_t n, double* params, const double* grads, double* m, double* v,
                      double beta1, double beta2, double step_size, double inv_sqrt_bc2,
                      double epsilon);
};

const KernelTable& scalar_kernels();

/// nullptr when the variant is not compiled in or the CPU lacks the features.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// The table used by the library. Chosen on first use: the best supported
/// ISA, unless HASHPOSE_SIMD=scalar|avx2|neon asks for a specific one.
const KernelTable& kernels();

/// Forces a variant for the rest of the process. Returns false (and keeps the
/// current table) when that variant is unavailable.
bool select_isa(Isa isa);

}  // namespace hashpose::simd
