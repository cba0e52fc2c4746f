#pragma once

// Analytic scenes built from soft-edged spheres and boxes, and the synthetic
// dataset generator that renders them through the shared compositor.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "hashpose/common.hpp"
#include "hashpose/dataset.hpp"
#include "hashpose/renderer.hpp"

namespace hashpose {

enum class PrimitiveKind { kSphere, kBox };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.5);  // sphere: radius in x; box: half extents
  Vec3 albedo = Vec3::Constant(0.5);
  double density = 30.0;

  double signed_distance(const Vec3& p) const;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  bool white_background = true;
  Vec3 bounds_lo = Vec3::Constant(-1.0);
  Vec3 bounds_hi = Vec3::Constant(1.0);
  /// Width of the sigmoid occupancy ramp across a surface; 0 gives hard edges.
  double edge_softness = 0.02;

  void validate() const;
  static SceneSpec default_scene();
};

struct FieldSample {
  double sigma = 0.0;
  Vec3 rgb = Vec3::Zero();
};

/// Summed densities; density-weighted mean albedo.
FieldSample evaluate_field(const SceneSpec& spec, const Vec3& p);

struct ViewConfig {
  int n_views = 20;
  int image_size = 64;
  double radius = 4.0;
  double fov_deg = 45.0;
  double min_elevation_deg = 10.0;
  double max_elevation_deg = 60.0;
  int n_samples = 64;
  /// Every test_every-th view (starting at index test_every - 1) is held out.
  int test_every = 5;

  void validate() const;
};

/// Camera-to-world pose at `position` whose -z axis points at `target`.
Pose look_at(const Vec3& position, const Vec3& target, const Vec3& up = Vec3::UnitZ());

/// Depth range that covers the scene box (with margin) from every camera.
RenderConfig ground_truth_render_config(const SceneSpec& spec, const ViewConfig& views);

std::vector<float> render_analytic(const SceneSpec& spec, const Intrinsics& intrinsics, const Pose& pose,
                                   const RenderConfig& config);

/// Cameras on a golden-angle spiral over the elevation band, azimuth offset
/// drawn from `rng`; initial poses equal the ground truth.
SceneDataset generate_scene(const SceneSpec& spec, const ViewConfig& views, std::mt19937_64& rng);

}  // namespace hashpose
