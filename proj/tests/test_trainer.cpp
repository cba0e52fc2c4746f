#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "hashpose/trainer.hpp"

using namespace hashpose;

namespace {

// Three-branch weight written out independently; levels are 1-based and the
// schedule position is shifted by one so level L reaches 1 at t_e.
double oracle_rate(int l, double t, int L, double ts, double te) {
  double a;
  if (t <= ts) a = 0.0;
  else if (t >= te) a = L;
  else a = L * (t - ts) / (te - ts);
  a += 1.0;
  if (a < l) return 0.0;
  if (a - l < 1.0) return (1.0 - std::cos((a - l) * std::numbers::pi)) / 2.0;
  return 1.0;
}

}  // namespace

TEST_CASE("curriculum weight reproduces the three-branch table on a 1000-point grid") {
  const int L = 8;
  const CurriculumSchedule s{L, 200.0, 1000.0};
  int middle = 0;
  for (int l = 1; l <= L; ++l) {
    for (int i = 0; i < 125; ++i) {
      const double t = 1200.0 * i / 124.0;
      const double got = curriculum_weight(l, t, s);
      const double want = oracle_rate(l, t, L, 200.0, 1000.0);
      if (want == 0.0 || want == 1.0) {
        REQUIRE(got == want);
      } else {
        ++middle;
        REQUIRE(std::abs(got - want) <= 1e-12);
      }
    }
  }
  CHECK(middle >= 80);
}

TEST_CASE("curriculum boundary values") {
  const CurriculumSchedule s{6, 100.0, 500.0};
  for (int l = 1; l <= 6; ++l) {
    CHECK(curriculum_weight(l, 0.0, s) == 0.0);
    CHECK(curriculum_weight(l, 100.0, s) == 0.0);
    CHECK(curriculum_weight(l, 500.0, s) == 1.0);
    CHECK(curriculum_weight(l, 1e9, s) == 1.0);
  }
  CHECK(curriculum_rate(2.5, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(curriculum_rate(1.999, 2) == 0.0);
  CHECK(curriculum_rate(3.0, 2) == 1.0);
  CHECK_THROWS_AS(curriculum_weight(0, 10.0, s), ValidationError);
  CHECK_THROWS_AS(curriculum_weight(7, 10.0, s), ValidationError);
}

TEST_CASE("curriculum is continuous and monotone") {
  const int L = 8;
  const CurriculumSchedule s{L, 0.0, 1.0};
  double max_step = 0.0;
  const int n = 2000000;
  for (int l = 1; l <= L; ++l) {
    double prev = curriculum_weight(l, 0.0, s);
    for (int i = 1; i <= n; ++i) {
      const double r = curriculum_weight(l, double(i) / n, s);
      REQUIRE(r >= prev);
      max_step = std::max(max_step, r - prev);
      prev = r;
    }
  }
  CHECK(max_step < 1e-5);
  for (int i = 0; i <= 100; ++i) {
    for (int l = 1; l < L; ++l) CHECK(curriculum_weight(l, i / 100.0, s) >= curriculum_weight(l + 1, i / 100.0, s));
  }
}

TEST_CASE("exponential learning-rate decay endpoints and midpoint") {
  CHECK(exponential_lr(5e-4, 1e-4, 0, 100) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(exponential_lr(5e-4, 1e-4, 100, 100) == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(exponential_lr(5e-4, 1e-4, 50, 100) == doctest::Approx(std::sqrt(5e-4 * 1e-4)).epsilon(1e-14));
}

TEST_CASE("adam step scales each segment by its rate and freezes rate-0 segments") {
  std::vector<double> p = {1.0, 2.0, 3.0, 4.0}, g = {0.1, -0.2, 0.3, -0.4};
  AdamMoments m(4);
  const std::vector<double> rates = {0.0, 0.5};
  adam_step(p, g, m, {}, 1, 1e-2, rates, 2);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 2.0);
  // First step: m_hat = g, v_hat = g^2, so the step is lr * rate * sign(g).
  CHECK(p[2] == doctest::Approx(3.0 - 0.5e-2).epsilon(1e-12));
  CHECK(p[3] == doctest::Approx(4.0 + 0.5e-2).epsilon(1e-12));
  CHECK(m.m[0] != 0.0);
  CHECK_THROWS_AS(adam_step(p, g, m, {}, 1, 1e-2, rates, 3), ValidationError);
}

TEST_CASE("non-finite gradients leave the parameters untouched") {
  std::vector<double> p = {1.0, 2.0}, g = {0.1, std::numeric_limits<double>::quiet_NaN()};
  AdamMoments m(2);
  CHECK_THROWS_AS(adam_step(p, g, m, {}, 1, 1e-2), DivergenceError);
  CHECK(p[0] == 1.0);
  CHECK(m.m[0] == 0.0);
}

TEST_CASE("ablation flags map onto weight modes") {
  CHECK(AblationFlags{true, true, true}.weight_mode() == WeightMode::kStraightThrough);
  CHECK(AblationFlags{false, true, true}.weight_mode() == WeightMode::kSmooth);
  CHECK(AblationFlags{false, false, true}.weight_mode() == WeightMode::kLinear);
  CHECK(AblationFlags{true, false, false}.weight_mode() == WeightMode::kLinear);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.curriculum_start = 0.6;
  c.curriculum_end = 0.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.lr_start = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.batch_rays = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  CHECK_NOTHROW(c.validate());
}
