#include "hashpose/scene.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace hashpose {
namespace {

double occupancy(double sd, double softness) {
  if (softness <= 0.0) return sd <= 0.0 ? 1.0 : 0.0;
  return sigmoid(-sd / softness);
}

bool primitive_inside(const Primitive& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 half = p.kind == PrimitiveKind::kSphere ? Vec3::Constant(p.size.x()) : p.size;
  return ((p.center - half).array() >= lo.array()).all() && ((p.center + half).array() <= hi.array()).all();
}

}  // namespace

double Primitive::signed_distance(const Vec3& p) const {
  if (kind == PrimitiveKind::kSphere) return (p - center).norm() - size.x();
  const Vec3 q = (p - center).cwiseAbs() - size;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

void SceneSpec::validate() const {
  require(!primitives.empty(), "scene: at least one primitive is required");
  require((bounds_hi.array() > bounds_lo.array()).all(), "scene: bounds_hi must exceed bounds_lo");
  require(edge_softness >= 0.0, "scene: edge_softness must be >= 0");
  for (const Primitive& p : primitives) {
    require(p.size.allFinite() && (p.size.array() > 0.0).all(), "scene: primitive size must be positive");
    require(std::isfinite(p.density) && p.density >= 0.0, "scene: primitive density must be >= 0");
    require((p.albedo.array() >= 0.0).all() && (p.albedo.array() <= 1.0).all(),
            "scene: albedo must lie in [0, 1]");
    require(primitive_inside(p, bounds_lo, bounds_hi), "scene: primitive extends outside the bounding box");
  }
}

SceneSpec SceneSpec::default_scene() {
  SceneSpec s;
  auto sphere = [](Vec3 c, double r, Vec3 albedo) {
    return Primitive{PrimitiveKind::kSphere, c, Vec3::Constant(r), albedo, 30.0};
  };
  auto box = [](Vec3 c, Vec3 half, Vec3 albedo) { return Primitive{PrimitiveKind::kBox, c, half, albedo, 30.0}; };
  s.primitives = {
      box({0.0, 0.0, -0.8}, {0.9, 0.9, 0.08}, {0.45, 0.45, 0.5}),
      sphere({0.0, 0.0, -0.25}, 0.42, {0.9, 0.2, 0.15}),
      box({0.5, 0.45, -0.4}, {0.2, 0.2, 0.32}, {0.15, 0.3, 0.9}),
      sphere({-0.5, 0.45, -0.35}, 0.3, {0.2, 0.8, 0.3}),
      box({-0.45, -0.5, -0.55}, {0.3, 0.15, 0.18}, {0.95, 0.8, 0.1}),
      sphere({0.5, -0.45, -0.45}, 0.25, {0.8, 0.2, 0.8}),
      sphere({0.05, 0.1, 0.4}, 0.2, {0.1, 0.75, 0.8}),
  };
  return s;
}

FieldSample evaluate_field(const SceneSpec& spec, const Vec3& p) {
  FieldSample out;
  for (const Primitive& prim : spec.primitives) {
    const double s = prim.density * occupancy(prim.signed_distance(p), spec.edge_softness);
    out.sigma += s;
    out.rgb += s * prim.albedo;
  }
  if (out.sigma > 0.0) out.rgb /= out.sigma;
  return out;
}

void ViewConfig::validate() const {
  require(n_views >= 2, "views: n_views must be >= 2");
  require(image_size >= 1, "views: image_size must be >= 1");
  require(radius > 0.0, "views: radius must be positive");
  require(fov_deg > 0.0 && fov_deg < 180.0, "views: fov_deg must lie in (0, 180)");
  require(min_elevation_deg <= max_elevation_deg && std::abs(max_elevation_deg) < 90.0 &&
              std::abs(min_elevation_deg) < 90.0,
          "views: elevation band must lie strictly between -90 and 90 degrees");
  require(n_samples >= 2, "views: n_samples must be >= 2");
  require(test_every >= 0, "views: test_every must be >= 0");
}

Pose look_at(const Vec3& position, const Vec3& target, const Vec3& up) {
  const Vec3 back = (position - target).normalized();
  Vec3 right = up.cross(back);
  require(right.norm() > 1e-9, "look_at: view direction is parallel to up");
  right.normalize();
  Pose pose;
  pose.R.col(0) = right;
  pose.R.col(1) = back.cross(right);
  pose.R.col(2) = back;
  pose.t = position;
  return pose;
}

RenderConfig ground_truth_render_config(const SceneSpec& spec, const ViewConfig& views) {
  const SceneBounds b = SceneBounds::with_margin(spec.bounds_lo, spec.bounds_hi);
  const double half_diag = 0.5 * b.extent().norm();
  RenderConfig cfg;
  cfg.n_samples = views.n_samples;
  cfg.t_near = std::max(0.05, views.radius - half_diag - 0.5);
  cfg.t_far = views.radius + half_diag + 1.0;
  cfg.stratified = false;
  cfg.white_background = spec.white_background;
  return cfg;
}

std::vector<float> render_analytic(const SceneSpec& spec, const Intrinsics& intrinsics, const Pose& pose,
                                   const RenderConfig& config) {
  config.validate();
  RenderConfig fixed = config;
  fixed.stratified = false;
  std::mt19937_64 unused(0);
  const std::vector<double> depths = sample_depths(fixed, unused);
  const std::size_t n = depths.size();
  std::vector<double> sigma(n), rgb(3 * n);
  std::vector<float> image(std::size_t(intrinsics.width) * intrinsics.height * 3);
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      const Ray ray = generate_ray(u + 0.5, v + 0.5, intrinsics, pose);
      for (std::size_t i = 0; i < n; ++i) {
        const FieldSample s = evaluate_field(spec, ray.origin + depths[i] * ray.direction);
        sigma[i] = s.sigma;
        for (int c = 0; c < 3; ++c) rgb[3 * i + c] = s.rgb[c];
      }
      const CompositeResult r = composite(sigma, rgb, depths, config.background());
      float* px = image.data() + (std::size_t(v) * intrinsics.width + u) * 3;
      for (int c = 0; c < 3; ++c) px[c] = float(r.color[c]);
    }
  }
  return image;
}

SceneDataset generate_scene(const SceneSpec& spec, const ViewConfig& views, std::mt19937_64& rng) {
  spec.validate();
  views.validate();
  const RenderConfig rc = ground_truth_render_config(spec, views);

  SceneDataset ds;
  ds.intrinsics.width = views.image_size;
  ds.intrinsics.height = views.image_size;
  ds.intrinsics.cx = 0.5 * views.image_size;
  ds.intrinsics.cy = 0.5 * views.image_size;
  ds.intrinsics.focal = 0.5 * views.image_size / std::tan(0.5 * views.fov_deg * std::numbers::pi / 180.0);
  ds.bounds_lo = spec.bounds_lo;
  ds.bounds_hi = spec.bounds_hi;
  ds.t_near = rc.t_near;
  ds.t_far = rc.t_far;
  ds.white_background = spec.white_background;

  const Vec3 center = 0.5 * (spec.bounds_lo + spec.bounds_hi);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double offset = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const double deg = std::numbers::pi / 180.0;
  for (int i = 0; i < views.n_views; ++i) {
    const double az = offset + golden * i;
    const double el = (views.min_elevation_deg +
                       (views.max_elevation_deg - views.min_elevation_deg) * (i + 0.5) / views.n_views) * deg;
    const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    Frame f;
    char name[32];
    std::snprintf(name, sizeof(name), "r_%03d", i);
    f.name = name;
    f.pose = look_at(center + views.radius * dir, center);
    f.initial_pose = f.pose;
    f.test = views.test_every > 0 && (i + 1) % views.test_every == 0;
    f.image.width = views.image_size;
    f.image.height = views.image_size;
    f.image.rgb = render_analytic(spec, ds.intrinsics, f.pose, rc);
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace hashpose
