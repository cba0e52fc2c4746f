#pragma once

// Emission-absorption volume rendering of the learned field, with a reverse
// pass that reaches the hash tables, the decoder weights and the camera twist
// that generated each ray.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hashpose/common.hpp"
#include "hashpose/decoder.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/pose.hpp"

namespace hashpose {

inline constexpr double kTerminalInterval = 1e10;

struct RenderConfig {
  int n_samples = 64;
  double t_near = 2.0;
  double t_far = 6.5;
  bool stratified = true;
  bool white_background = true;

  void validate() const;
  double background() const { return white_background ? 1.0 : 0.0; }
};

/// World box mapped onto the encoding's unit cube.
struct SceneBounds {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  /// Grows [lo, hi] by `margin` of its extent on every side.
  static SceneBounds with_margin(const Vec3& lo, const Vec3& hi, double margin = 0.05);
  Vec3 extent() const { return hi - lo; }
  Vec3 to_unit(const Vec3& p) const { return (p - lo).cwiseQuotient(extent()); }
};

inline bool inside_unit_cube(const Vec3& u) {
  return (u.array() >= 0.0).all() && (u.array() <= 1.0).all();
}

/// Stratified: one uniform draw in each of n equal bins of [t_near, t_far].
/// Otherwise the bin midpoints.
std::vector<double> sample_depths(const RenderConfig& config, std::mt19937_64& rng);

struct CompositeResult {
  std::array<double, 3> color{};
  std::vector<double> alpha;
  std::vector<double> transmittance;  // n + 1 entries, T_1 = 1
  std::vector<double> weight;         // T_i * alpha_i
};

/// rgbs holds n interleaved triples.
CompositeResult composite(std::span<const double> sigmas, std::span<const double> rgbs,
                          std::span<const double> depths, double background);

/// dL/dsigma_i and dL/dc_i (interleaved) for an upstream dL/dC.
void composite_backward(const CompositeResult& forward, std::span<const double> rgbs,
                        std::span<const double> depths, double background,
                        const std::array<double, 3>& dl_dcolor, std::span<double> dl_dsigma,
                        std::span<double> dl_drgb);

/// Everything the renderer reads from the learned model.
struct Field {
  const HashEncoding* encoding = nullptr;
  const HashTables* tables = nullptr;
  WeightMode mode = WeightMode::kLinear;
  const DecoderParams* decoder = nullptr;
  SceneBounds bounds;
};

struct RayBatch {
  std::vector<Ray> rays;
  std::vector<std::array<double, 3>> targets;
  std::vector<RayJacobian> jacobians;  // empty when no pose gradient is wanted
  std::vector<int> cameras;            // camera index per ray

  std::size_t size() const { return rays.size(); }
};

struct RayTape {
  std::vector<double> depths;
  std::vector<double> sigma;
  std::vector<double> rgb;
  std::vector<std::uint8_t> inside;
  std::vector<LevelContext> context;  // n_samples * levels
  std::vector<DecoderTape> decoder;
  std::vector<double> dir_enc;
  CompositeResult composite;
};

struct RenderTape {
  std::vector<RayTape> rays;
  std::uint64_t decoder_version = 0;
  std::size_t table_size = 0;
  double background = 1.0;
};

/// Renders one ray at the given depths. `tape` may be null.
std::array<double, 3> render_ray(const Ray& ray, std::span<const double> depths, const Field& field,
                                 double background, RayTape* tape);

struct BatchResult {
  std::vector<std::array<double, 3>> colors;
  double loss = 0.0;  // mean over rays and channels
};

/// Throws DivergenceError on a non-finite loss.
BatchResult render_batch(const RayBatch& batch, const Field& field, const RenderConfig& config,
                         std::mt19937_64& rng, RenderTape* tape, int threads = 1);

struct FieldGradients {
  std::span<double> tables;          // same layout as HashTables::values
  std::span<double> decoder;         // same layout as DecoderParams::values
  std::vector<Vec6>* poses = nullptr;  // per camera, indexed by RayBatch::cameras
};

/// Accumulates the gradients of the batch loss of the preceding render_batch.
void render_backward(const RenderTape& tape, const RayBatch& batch, const BatchResult& result,
                     const Field& field, FieldGradients grads, int threads = 1);

/// Full image, rows top to bottom, interleaved RGB. Deterministic bin midpoints.
std::vector<float> render_image(const Intrinsics& intrinsics, const Pose& pose, const Field& field,
                                const RenderConfig& config, int threads = 1);

}  // namespace hashpose
