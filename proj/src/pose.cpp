#include "hashpose/pose.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace hashpose {
namespace {

constexpr double kRodriguesSeriesBelow = 1e-6;
// The V-matrix coefficient (theta - sin theta)/theta^3 and the derivatives of
// both coefficients cancel catastrophically well above 1e-6.
constexpr double kCoefficientSeriesBelow = 1e-1;

struct SeCoefficients {
  double a = 0.5;    // (1 - cos t) / t^2
  double b = 1 / 6.; // (t - sin t) / t^3
  double a1 = -1 / 12.;  // a'(t) / t
  double b1 = -1 / 60.;  // b'(t) / t
};

SeCoefficients se3_coefficients(double theta) {
  SeCoefficients c;
  const double t2 = theta * theta;
  if (theta < kRodriguesSeriesBelow) {
    c.a = 0.5 - t2 / 24.0;
  } else {
    const double half = std::sin(0.5 * theta);
    c.a = 2.0 * half * half / t2;
  }
  if (theta < kCoefficientSeriesBelow) {
    const double t4 = t2 * t2;
    c.b = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0;
    c.a1 = -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0;
    c.b1 = -1.0 / 60.0 + t2 / 1260.0 - t4 / 60480.0;
  } else {
    const double s = std::sin(theta);
    const double one_minus_cos = 1.0 - std::cos(theta);
    const double t3 = t2 * theta;
    c.b = (theta - s) / t3;
    c.a1 = (theta * s - 2.0 * one_minus_cos) / (t2 * t2);
    c.b1 = (one_minus_cos * theta - 3.0 * (theta - s)) / (t3 * t2);
  }
  return c;
}

Mat3 rodrigues(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = skew(omega);
  if (theta < kRodriguesSeriesBelow) return Mat3::Identity() + k + 0.5 * k * k;
  const double half = std::sin(0.5 * theta);
  return Mat3::Identity() + (std::sin(theta) / theta) * k + (2.0 * half * half / (theta * theta)) * k * k;
}

Vec3 vee(const Mat3& m) { return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)}; }

}  // namespace

Vec6 Twist::vector() const {
  Vec6 psi;
  psi << omega, v;
  return psi;
}

Twist Twist::from_vector(const Vec6& psi) { return {psi.head<3>(), psi.tail<3>()}; }

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = R;
  m.topRightCorner<3, 1>() = t;
  return m;
}

Pose Pose::from_matrix(const Mat4& m) { return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()}; }

void Pose::validate(double tol) const {
  require(R.allFinite() && t.allFinite(), "pose: non-finite entries");
  require((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol,
          "pose: rotation is not orthonormal");
  require(std::abs(R.determinant() - 1.0) <= tol, "pose: rotation determinant is not +1");
}

void Intrinsics::validate() const {
  require(std::isfinite(focal) && focal > 0.0, "intrinsics: focal must be positive");
  require(width >= 1 && height >= 1, "intrinsics: image size must be positive");
  require(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height,
          "intrinsics: principal point must lie inside the image");
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const SeCoefficients c = se3_coefficients(omega.norm());
  const Mat3 k = skew(omega);
  return Mat3::Identity() + c.a * k + c.b * k * k;
}

Pose exp_map(const Twist& psi) {
  return {rodrigues(psi.omega), so3_left_jacobian(psi.omega) * psi.v};
}

Twist log_map(const Pose& pose) {
  const Eigen::AngleAxisd aa(pose.R);
  Twist psi;
  psi.omega = aa.angle() * aa.axis();
  psi.v = so3_left_jacobian(psi.omega).partialPivLu().solve(pose.t);
  return psi;
}

PoseDerivatives pose_derivatives(const Twist& psi) {
  PoseDerivatives out;
  const Vec3& w = psi.omega;
  const Vec3& v = psi.v;
  const SeCoefficients c = se3_coefficients(w.norm());
  const Mat3 k = skew(w);
  out.left_jacobian = Mat3::Identity() + c.a * k + c.b * k * k;
  out.pose.R = rodrigues(w);
  out.pose.t = out.left_jacobian * v;

  // t = v + a (w x v) + b (w x (w x v)), with a, b functions of |w|.
  const Vec3 wxv = w.cross(v);
  const Vec3 wwv = w.cross(wxv);
  const Mat3 d_wwv = w.dot(v) * Mat3::Identity() + w * v.transpose() - 2.0 * v * w.transpose();
  out.dt_domega = c.a1 * wxv * w.transpose() - c.a * skew(v) + c.b1 * wwv * w.transpose() + c.b * d_wwv;
  return out;
}

Ray generate_ray(double u, double v, const Intrinsics& intrinsics, const Pose& pose) {
  const Vec3 p((u - intrinsics.cx) / intrinsics.focal, (v - intrinsics.cy) / intrinsics.focal, -1.0);
  return {pose.t, (pose.R * p).normalized()};
}

Ray generate_ray(double u, double v, const Intrinsics& intrinsics, const PoseDerivatives& pose,
                 RayJacobian& jacobian) {
  const Vec3 p((u - intrinsics.cx) / intrinsics.focal, (v - intrinsics.cy) / intrinsics.focal, -1.0);
  const Vec3 q = pose.pose.R * p;
  const double norm = q.norm();
  const Vec3 d = q / norm;

  Mat36 dq = Mat36::Zero();
  dq.leftCols<3>() = -skew(q) * pose.left_jacobian;
  jacobian.origin.leftCols<3>() = pose.dt_domega;
  jacobian.origin.rightCols<3>() = pose.left_jacobian;
  jacobian.direction = (Mat3::Identity() - d * d.transpose()) / norm * dq;
  jacobian.point = dq + jacobian.origin;
  return {pose.pose.t, d};
}

std::vector<Twist> perturb_poses(std::span<const Pose> poses, double sigma, std::uint64_t seed) {
  require(std::isfinite(sigma) && sigma >= 0.0, "perturb_poses: sigma must be >= 0");
  std::vector<Twist> out;
  out.reserve(poses.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const Pose& pose : poses) {
    Vec6 psi = log_map(pose).vector();
    if (sigma > 0.0) {
      for (int i = 0; i < 6; ++i) psi[i] += sigma * normal(rng);
    }
    Twist twist = Twist::from_vector(psi);
    if (twist.omega.norm() >= std::numbers::pi) twist = log_map(exp_map(twist));
    out.push_back(twist);
  }
  return out;
}

double rotation_error(const Mat3& r_prime, const Mat3& r) {
  const Mat3 m = r_prime * r.transpose();
  const double cos_angle = std::clamp(0.5 * ((r_prime.array() * r.array()).sum() - 1.0), -1.0, 1.0);
  // atan2 with the skew part keeps full precision near 0 where arccos does not.
  const double sin_angle = 0.5 * vee(m).norm();
  return std::atan2(sin_angle, cos_angle) * 180.0 / std::numbers::pi;
}

double translation_error(const Vec3& t_prime, const Vec3& t) { return (t_prime - t).squaredNorm(); }

Similarity Similarity::inverse() const {
  Similarity inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

Alignment procrustes_align(std::span<const Pose> learned, std::span<const Pose> reference) {
  require(learned.size() == reference.size(), "procrustes_align: pose count mismatch");
  const std::size_t n = learned.size();
  require(n >= 3, "procrustes_align: need at least three cameras");

  Eigen::Matrix3Xd x(3, n), y(3, n);
  for (std::size_t i = 0; i < n; ++i) {
    x.col(i) = learned[i].t;
    y.col(i) = reference[i].t;
  }
  const Vec3 mu_x = x.rowwise().mean();
  const Vec3 mu_y = y.rowwise().mean();
  x.colwise() -= mu_x;
  y.colwise() -= mu_y;

  auto check_spread = [](const Eigen::Matrix3Xd& pts, const char* what) {
    const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(pts);
    const Vec3 s = svd.singularValues();
    require(s[0] > 1e-12 && s[1] > 1e-9 * s[0],
            std::string("procrustes_align: degenerate (collinear or coincident) ") + what + " centers");
  };
  check_spread(x, "learned");
  check_spread(y, "reference");

  const Mat3 cov = y * x.transpose() / double(n);
  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s[2] = -1.0;
  Alignment out;
  out.transform.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  const double var_x = x.squaredNorm() / double(n);
  out.transform.scale = svd.singularValues().dot(s) / var_x;
  out.transform.translation = mu_y - out.transform.scale * out.transform.rotation * mu_x;
  out.aligned.reserve(n);
  for (const Pose& pose : learned) out.aligned.push_back(out.transform.apply(pose));
  return out;
}

PoseErrors pose_errors(std::span<const Pose> aligned, std::span<const Pose> reference) {
  require(aligned.size() == reference.size() && !aligned.empty(), "pose_errors: pose count mismatch");
  PoseErrors e;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    e.rotation_deg += rotation_error(reference[i].R, aligned[i].R);
    e.translation += translation_error(reference[i].t, aligned[i].t);
  }
  e.rotation_deg /= double(aligned.size());
  e.translation /= double(aligned.size());
  return e;
}

}  // namespace hashpose
