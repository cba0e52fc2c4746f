#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hashpose/simd/kernels.hpp"

using namespace hashpose::simd;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
  }
}

std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> out;
  if (auto* k = avx2_kernels()) out.push_back(k);
  if (auto* k = neon_kernels()) out.push_back(k);
  return out;
}

}  // namespace

TEST_CASE("every vector kernel agrees with the scalar reference") {
  const KernelTable& ref = scalar_kernels();
  const auto vs = variants();
  if (vs.empty()) MESSAGE("no vector ISA on this machine; only the scalar table is exercised");
  std::mt19937_64 rng(1);
  // Sizes straddle the vector widths so every tail path runs.
  for (std::size_t in : {1u, 3u, 4u, 7u, 16u, 33u}) {
    for (std::size_t out : {1u, 2u, 4u, 5u, 8u, 19u, 64u}) {
      const auto w = randn(in * out, rng), b = randn(out, rng), x = randn(in, rng), dy = randn(out, rng);
      std::vector<double> y_ref(out), dx_ref(in), dw_ref = randn(in * out, rng), db_ref = randn(out, rng);
      ref.dense_forward(in, out, w.data(), b.data(), x.data(), y_ref.data());
      ref.dense_backward_input(in, out, w.data(), dy.data(), dx_ref.data());
      const auto dw0 = dw_ref, db0 = db_ref;
      ref.dense_accumulate(in, out, x.data(), dy.data(), dw_ref.data(), db_ref.data());
      for (const KernelTable* k : vs) {
        CAPTURE(in);
        CAPTURE(out);
        std::vector<double> y(out), dx(in), dw = dw0, db = db0;
        k->dense_forward(in, out, w.data(), b.data(), x.data(), y.data());
        k->dense_backward_input(in, out, w.data(), dy.data(), dx.data());
        k->dense_accumulate(in, out, x.data(), dy.data(), dw.data(), db.data());
        check_close(y, y_ref, 1e-13);
        check_close(dx, dx_ref, 1e-13);
        check_close(dw, dw_ref, 1e-15);
        check_close(db, db_ref, 1e-15);
      }
    }
  }
  for (std::size_t n : {0u, 1u, 3u, 4u, 9u, 100u, 1027u}) {
    const auto x = randn(n, rng), y0 = randn(n, rng);
    std::vector<double> y_ref = y0;
    ref.axpy(n, 0.37, x.data(), y_ref.data());
    const double d_ref = ref.dot(n, x.data(), y0.data());
    auto p_ref = randn(n, rng);
    const auto p0 = p_ref, g = randn(n, rng);
    std::vector<double> m_ref = randn(n, rng), v_ref(n);
    for (std::size_t i = 0; i < n; ++i) v_ref[i] = std::abs(m_ref[i]) + 0.1;
    const auto m0 = m_ref, v0 = v_ref;
    ref.adam_update(n, p_ref.data(), g.data(), m_ref.data(), v_ref.data(), 0.9, 0.99, 1e-3, 1.2, 1e-15);
    for (const KernelTable* k : vs) {
      CAPTURE(n);
      std::vector<double> y = y0, p = p0, m = m0, v = v0;
      k->axpy(n, 0.37, x.data(), y.data());
      check_close(y, y_ref, 1e-15);
      CHECK(std::abs(k->dot(n, x.data(), y0.data()) - d_ref) <= 1e-12 * std::max(1.0, std::abs(d_ref)));
      k->adam_update(n, p.data(), g.data(), m.data(), v.data(), 0.9, 0.99, 1e-3, 1.2, 1e-15);
      check_close(p, p_ref, 1e-14);
      check_close(m, m_ref, 1e-15);
      check_close(v, v_ref, 1e-15);
    }
  }
}

TEST_CASE("scalar adam update matches the textbook formula") {
  double p = 0.5, g = -0.2, m = 0.01, v = 0.04;
  const double b1 = 0.9, b2 = 0.99, lr = 1e-2, eps = 1e-8;
  const int t = 3;
  const double m_new = b1 * m + (1 - b1) * g;
  const double v_new = b2 * v + (1 - b2) * g * g;
  const double m_hat = m_new / (1 - std::pow(b1, t));
  const double v_hat = v_new / (1 - std::pow(b2, t));
  const double want = p - lr * m_hat / (std::sqrt(v_hat) + eps);
  scalar_kernels().adam_update(1, &p, &g, &m, &v, b1, b2, lr / (1 - std::pow(b1, t)),
                               1.0 / std::sqrt(1 - std::pow(b2, t)), eps);
  CHECK(m == doctest::Approx(m_new).epsilon(1e-15));
  CHECK(v == doctest::Approx(v_new).epsilon(1e-15));
  CHECK(p == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("isa selection falls back cleanly") {
  const Isa before = kernels().isa;
  CHECK(select_isa(Isa::kScalar));
  CHECK(kernels().isa == Isa::kScalar);
  if (!neon_kernels()) CHECK_FALSE(select_isa(Isa::kNeon));
  CHECK(kernels().isa == Isa::kScalar);
  select_isa(before);
  CHECK(isa_name(Isa::kAvx2) == "avx2");
}
