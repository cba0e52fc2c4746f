#pragma once

// Camera poses as se(3) twists, ray generation with pose Jacobians, pose
// noise, and the post-alignment error metrics.

#include <cstdint>
#include <span>
#include <vector>

#include "hashpose/common.hpp"

namespace hashpose {

/// psi = (omega, v): axis-angle rotation and the translational part.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 vector() const;
  static Twist from_vector(const Vec6& psi);
};

/// Camera-to-world rigid transform.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Mat4 matrix() const;
  static Pose from_matrix(const Mat4& m);
  /// Throws ValidationError unless R is orthonormal with det +1 (to `tol`).
  void validate(double tol = 1e-9) const;
};

struct Intrinsics {
  double focal = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();
};

Mat3 skew(const Vec3& v);

/// SO(3) left Jacobian, which is also the V matrix of the SE(3) exponential.
Mat3 so3_left_jacobian(const Vec3& omega);

Pose exp_map(const Twist& psi);
Twist log_map(const Pose& pose);

/// A pose together with the pieces needed to differentiate world-space
/// quantities with respect to its twist.
struct PoseDerivatives {
  Pose pose;
  Mat3 left_jacobian = Mat3::Identity();  // d(R p)/d omega = -[R p]_x J
  Mat3 dt_domega = Mat3::Zero();          // t = J(omega) v
};

PoseDerivatives pose_derivatives(const Twist& psi);

/// Derivatives of a generated ray with respect to the camera twist. A point
/// at depth s along the ray moves with origin + s * direction.
struct RayJacobian {
  Mat36 origin = Mat36::Zero();
  Mat36 direction = Mat36::Zero();
  /// Un-normalized image-plane point R [x_I; -1] + t.
  Mat36 point = Mat36::Zero();
};

/// Pixel (u, v) in continuous image coordinates; pixel centers sit at +0.5.
Ray generate_ray(double u, double v, const Intrinsics& intrinsics, const Pose& pose);
Ray generate_ray(double u, double v, const Intrinsics& intrinsics, const PoseDerivatives& pose,
                 RayJacobian& jacobian);

/// psi' = log(pose) + N(0, sigma^2 I), re-expressed with |omega| < pi.
std::vector<Twist> perturb_poses(std::span<const Pose> poses, double sigma, std::uint64_t seed);

/// Angle of R' R^T in degrees.
double rotation_error(const Mat3& r_prime, const Mat3& r);
/// Squared Euclidean distance.
double translation_error(const Vec3& t_prime, const Vec3& t);

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * rotation * x + translation; }
  Pose apply(const Pose& pose) const { return {rotation * pose.R, apply(pose.t)}; }
  Similarity inverse() const;
};

struct Alignment {
  Similarity transform;
  std::vector<Pose> aligned;
};

/// Least-squares similarity taking the learned camera centers onto the
/// reference centers (reflections excluded), applied to every learned pose.
Alignment procrustes_align(std::span<const Pose> learned, std::span<const Pose> reference);

struct PoseErrors {
  double rotation_deg = 0.0;  // mean over cameras
  double translation = 0.0;   // mean squared distance
};

/// Mean errors of already-aligned poses against the reference.
PoseErrors pose_errors(std::span<const Pose> aligned, std::span<const Pose> reference);

}  // namespace hashpose
