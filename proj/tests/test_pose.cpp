#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hashpose/gradcheck.hpp"
#include "hashpose/pose.hpp"

using namespace hashpose;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

Mat3 axis_angle(const Vec3& w) {
  const double a = w.norm();
  if (a == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(a, w / a).toRotationMatrix();
}

}  // namespace

TEST_CASE("exp map rotation is Rodrigues and the translation goes through V") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    Twist psi;
    psi.omega = random_vec(rng, 1.0);
    psi.v = random_vec(rng, 1.0);
    const Pose p = exp_map(psi);
    CHECK((p.R - axis_angle(psi.omega)).norm() < 1e-12);
    // V = I + (1-cos a)/a^2 K + (a - sin a)/a^3 K^2
    const double a = psi.omega.norm();
    const Mat3 K = skew(psi.omega);
    const Mat3 V = Mat3::Identity() + (1 - std::cos(a)) / (a * a) * K + (a - std::sin(a)) / (a * a * a) * K * K;
    CHECK((p.t - V * psi.v).norm() < 1e-12);
    p.validate();
  }
}

TEST_CASE("log inverts exp, including tiny and near-pi angles") {
  std::mt19937_64 rng(2);
  std::vector<double> angles = {0.0, 1e-12, 1e-6, 0.3, 1.5, 3.0, std::numbers::pi - 1e-6};
  for (double a : angles) {
    Twist psi;
    psi.omega = random_vec(rng, 1.0).normalized() * a;
    psi.v = random_vec(rng, 1.0);
    const Twist back = log_map(exp_map(psi));
    CHECK((back.omega - psi.omega).norm() < 1e-8);
    CHECK((back.v - psi.v).norm() < 1e-8);
  }
}

TEST_CASE("ray jacobians match finite differences") {
  for (std::uint64_t seed : {3ull, 4ull}) {
    for (const GradcheckResult& r : gradcheck_pose(seed)) {
      INFO(r.family << " err " << r.max_rel_err);
      CHECK(r.pass());
    }
  }
}

TEST_CASE("identity camera looks down -z through the principal point") {
  const Intrinsics K{10.0, 4.0, 3.0, 8, 6};
  const Ray r = generate_ray(4.0, 3.0, K, Pose{});
  CHECK((r.direction - Vec3(0, 0, -1)).norm() < 1e-15);
  CHECK(r.origin.norm() == 0.0);
  const Ray right = generate_ray(5.0, 3.0, K, Pose{});
  CHECK(right.direction.x() > 0.0);
  CHECK(right.direction.norm() == doctest::Approx(1.0));
}

TEST_CASE("rotation error hand cases") {
  CHECK(rotation_error(Mat3::Identity(), Mat3::Identity()) == doctest::Approx(0.0));
  const Mat3 flip = axis_angle(Vec3(std::numbers::pi, 0, 0));
  CHECK(std::abs(rotation_error(flip, Mat3::Identity()) - 180.0) < 1e-6);
  const Mat3 rz = axis_angle(Vec3(0, 0, 0.1));
  CHECK(std::abs(rotation_error(rz, Mat3::Identity()) - 5.7296) < 1e-4);
  CHECK(std::abs(rotation_error(rz, Mat3::Identity()) - 0.1 * 180.0 / std::numbers::pi) < 1e-9);
  // Rounding can push the cosine past -1; the result must stay finite.
  const Mat3 near_flip = axis_angle(Vec3(0, std::numbers::pi * (1 - 1e-16), 0));
  CHECK(std::isfinite(rotation_error(near_flip, Mat3::Identity())));
}

TEST_CASE("translation error is the squared distance") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = random_vec(rng, 2.0), b = random_vec(rng, 2.0);
    const Vec3 d = a - b;
    CHECK(translation_error(a, b) == d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
  }
}

TEST_CASE("procrustes recovers a known similarity") {
  std::mt19937_64 rng(6);
  Similarity known;
  known.scale = 1.7;
  known.rotation = axis_angle(Vec3(0.3, -1.1, 0.6));
  known.translation = Vec3(0.5, -2.0, 1.25);
  std::vector<Pose> reference, learned;
  for (int i = 0; i < 20; ++i) {
    Twist psi;
    psi.omega = random_vec(rng, 1.0);
    psi.v = random_vec(rng, 2.0);
    reference.push_back(exp_map(psi));
  }
  const Similarity inv = known.inverse();
  for (const Pose& p : reference) learned.push_back(inv.apply(p));
  const Alignment a = procrustes_align(learned, reference);
  CHECK(std::abs(a.transform.scale - known.scale) < 1e-10);
  CHECK((a.transform.rotation - known.rotation).norm() < 1e-10);
  CHECK((a.transform.translation - known.translation).norm() < 1e-10);
  const PoseErrors e = pose_errors(a.aligned, reference);
  CHECK(e.rotation_deg < 1e-8);
  CHECK(e.translation < 1e-8);
}

TEST_CASE("similarity inverse round-trips") {
  Similarity s;
  s.scale = 0.4;
  s.rotation = axis_angle(Vec3(1, 2, 3).normalized() * 0.7);
  s.translation = Vec3(1, -1, 2);
  const Vec3 x(0.3, 0.2, -0.9);
  CHECK((s.inverse().apply(s.apply(x)) - x).norm() < 1e-14);
}

TEST_CASE("procrustes rejects degenerate input") {
  std::vector<Pose> two(2);
  two[1].t = Vec3(1, 0, 0);
  CHECK_THROWS_AS(procrustes_align(two, std::vector<Pose>(3)), ValidationError);
  const std::vector<Pose> same(4);
  CHECK_THROWS_AS(procrustes_align(same, same), ValidationError);
}

TEST_CASE("perturbation: zero sigma is the identity, otherwise the right spread") {
  std::mt19937_64 rng(7);
  std::vector<Pose> poses;
  for (int i = 0; i < 400; ++i) {
    Twist psi;
    psi.omega = random_vec(rng, 0.3);
    psi.v = random_vec(rng, 1.0);
    poses.push_back(exp_map(psi));
  }
  const auto same = perturb_poses(poses, 0.0, 1);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Pose p = exp_map(same[i]);
    CHECK((p.R - poses[i].R).norm() < 1e-12);
    CHECK((p.t - poses[i].t).norm() < 1e-12);
  }
  const auto noisy = perturb_poses(poses, 0.15, 2);
  double sq = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) sq += (noisy[i].vector() - log_map(poses[i]).vector()).squaredNorm();
  const double sigma = std::sqrt(sq / (6.0 * poses.size()));
  CHECK(sigma == doctest::Approx(0.15).epsilon(0.05));
  for (const Twist& t : noisy) CHECK(t.omega.norm() < std::numbers::pi);
  const auto again = perturb_poses(poses, 0.15, 2);
  for (std::size_t i = 0; i < poses.size(); ++i) CHECK(again[i].vector() == noisy[i].vector());
}
