#pragma once

// Joint optimization of hash tables, decoder and camera twists with Adam,
// exponential learning-rate decay and coarse-to-fine per-level table rates.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hashpose/dataset.hpp"
#include "hashpose/decoder.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/pose.hpp"
#include "hashpose/renderer.hpp"

namespace hashpose {

struct AblationFlags {
  bool straight_through = true;
  bool smooth_grad = true;
  bool curriculum = true;

  /// Smooth gradients reach the forward pass only when the straight-through
  /// trick is off; without smooth gradients the weights stay d-linear.
  WeightMode weight_mode() const;
};

struct TrainConfig {
  int iterations = 5000;
  int batch_rays = 1024;
  double lr_start = 5e-4;
  double lr_end = 1e-4;
  /// Multiplies the field rate for the hash tables only.
  double table_lr_scale = 1.0;
  double pose_lr_start = 5e-4;
  double pose_lr_end = 1e-5;
  double curriculum_start = 0.1;  // fractions of `iterations`
  double curriculum_end = 0.5;
  AblationFlags flags;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
  double eval_fraction = 0.05;
  int threads = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// start * (end / start)^(step / total).
double exponential_lr(double start, double end, double step, double total);

/// Three-branch rate of a 1-based level given the schedule position alpha.
double curriculum_rate(double alpha, int level);

/// Maps training steps onto level rates. alpha runs linearly from 1 at
/// `start_step` to levels + 1 at `end_step`, so the coarsest level ramps up
/// first and every level is at full rate once the interval has elapsed.
struct CurriculumSchedule {
  int levels = 1;
  double start_step = 0.0;
  double end_step = 1.0;

  double alpha(double step) const;
};

double curriculum_weight(int level, double step, const CurriculumSchedule& schedule);

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;

  AdamMoments() = default;
  explicit AdamMoments(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-15;
};

/// One bias-corrected Adam update at 1-based step `t`. When `segment_rates`
/// is non-empty the parameters are split into equal segments of
/// `segment_size` and each segment's step is multiplied by its rate; the
/// moments are updated regardless. Throws DivergenceError on non-finite
/// gradients before touching anything.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               const AdamHyper& hyper, int t, double lr, std::span<const double> segment_rates = {},
               std::size_t segment_size = 0);

struct AdamState {
  AdamMoments tables;
  AdamMoments decoder;
  AdamMoments poses;
  int step = 0;
};

/// Parameters being optimized.
struct Model {
  HashEncoding encoding;
  HashTables tables;
  DecoderParams decoder;
  SceneBounds bounds;
  std::vector<int> cameras;   // dataset frame index of each refined camera
  std::vector<Twist> poses;   // current twist per refined camera

  Model(const EncodingConfig& enc, const DecoderConfig& dec, const SceneBounds& bounds);
  Field field(WeightMode mode) const;
  std::vector<Pose> current_poses() const;
};

/// Random tables and decoder weights, cameras initialized from the dataset's
/// initial poses (or from `initial` when given).
Model init_model(const SceneDataset& dataset, const EncodingConfig& enc, const DecoderConfig& dec,
                 std::uint64_t seed, std::span<const Twist> initial = {});

struct TimelineRow {
  int step = 0;
  double loss = 0.0;
  double psnr = 0.0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
};

/// Pose errors of the refined cameras against the dataset ground truth after
/// Procrustes alignment.
PoseErrors camera_errors(const Model& model, const SceneDataset& dataset, Similarity* transform = nullptr);

struct TrainState {
  Model model;
  AdamState adam;
  std::vector<TimelineRow> timeline;
  int step = 0;
};

TrainState make_train_state(Model model);

RenderConfig training_render_config(const SceneDataset& dataset, int n_samples, bool stratified = true);

using ProgressFn = std::function<void(const TimelineRow&)>;

/// Runs iterations from state.step to config.iterations. On divergence the
/// state holds the last good parameters and the exception propagates.
void train(const SceneDataset& dataset, const RenderConfig& render, const TrainConfig& config,
           TrainState& state, const ProgressFn& progress = {});

}  // namespace hashpose
