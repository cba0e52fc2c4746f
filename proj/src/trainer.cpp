#include "hashpose/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hashpose/image.hpp"
#include "hashpose/simd/kernels.hpp"

namespace hashpose {

WeightMode AblationFlags::weight_mode() const {
  if (!smooth_grad) return WeightMode::kLinear;
  return straight_through ? WeightMode::kStraightThrough : WeightMode::kSmooth;
}

void TrainConfig::validate() const {
  require(iterations >= 0, "train: iterations must be >= 0");
  require(batch_rays >= 1, "train: batch_rays must be >= 1");
  require(lr_start > 0.0 && lr_end > 0.0, "train: learning rates must be positive");
  require(pose_lr_start > 0.0 && pose_lr_end > 0.0, "train: pose learning rates must be positive");
  require(table_lr_scale > 0.0, "train: table_lr_scale must be positive");
  require(curriculum_start >= 0.0 && curriculum_start < curriculum_end && curriculum_end <= 1.0,
          "train: need 0 <= curriculum_start < curriculum_end <= 1");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: Adam betas must lie in [0, 1)");
  require(epsilon > 0.0, "train: epsilon must be positive");
  require(eval_fraction > 0.0 && eval_fraction <= 1.0, "train: eval_fraction must lie in (0, 1]");
  require(threads >= 1, "train: threads must be >= 1");
}

double exponential_lr(double start, double end, double step, double total) {
  if (total <= 0.0) return start;
  const double p = std::clamp(step / total, 0.0, 1.0);
  return start * std::pow(end / start, p);
}

double curriculum_rate(double alpha, int level) {
  const double d = alpha - level;
  if (d < 0.0) return 0.0;
  if (d < 1.0) return 0.5 * (1.0 - std::cos(d * std::numbers::pi));
  return 1.0;
}

double CurriculumSchedule::alpha(double step) const {
  const double span = end_step - start_step;
  const double p = span > 0.0 ? std::clamp((step - start_step) / span, 0.0, 1.0) : (step >= end_step ? 1.0 : 0.0);
  return levels * p + 1.0;
}

double curriculum_weight(int level, double step, const CurriculumSchedule& schedule) {
  require(level >= 1 && level <= schedule.levels, "curriculum_weight: level out of range");
  return curriculum_rate(schedule.alpha(step), level);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               const AdamHyper& hyper, int t, double lr, std::span<const double> segment_rates,
               std::size_t segment_size) {
  const std::size_t n = params.size();
  require(grads.size() == n && moments.m.size() == n && moments.v.size() == n, "adam_step: shape mismatch");
  require(t >= 1, "adam_step: step must be >= 1");
  for (double g : grads) {
    if (!std::isfinite(g)) throw DivergenceError("adam_step: non-finite gradient");
  }
  const double step_size = lr / (1.0 - std::pow(hyper.beta1, t));
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(1.0 - std::pow(hyper.beta2, t));
  const auto& k = simd::kernels();
  if (segment_rates.empty()) {
    k.adam_update(n, params.data(), grads.data(), moments.m.data(), moments.v.data(), hyper.beta1, hyper.beta2,
                  step_size, inv_sqrt_bc2, hyper.epsilon);
    return;
  }
  require(segment_size * segment_rates.size() == n, "adam_step: segments do not tile the parameters");
  for (std::size_t s = 0; s < segment_rates.size(); ++s) {
    const std::size_t off = s * segment_size;
    k.adam_update(segment_size, params.data() + off, grads.data() + off, moments.m.data() + off,
                  moments.v.data() + off, hyper.beta1, hyper.beta2, step_size * segment_rates[s], inv_sqrt_bc2,
                  hyper.epsilon);
  }
}

Model::Model(const EncodingConfig& enc, const DecoderConfig& dec, const SceneBounds& b)
    : encoding(enc), tables(encoding.make_tables()), decoder(dec, encoding.output_dim()), bounds(b) {}

Field Model::field(WeightMode mode) const { return Field{&encoding, &tables, mode, &decoder, bounds}; }

std::vector<Pose> Model::current_poses() const {
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (const Twist& psi : poses) out.push_back(exp_map(psi));
  return out;
}

Model init_model(const SceneDataset& dataset, const EncodingConfig& enc, const DecoderConfig& dec,
                 std::uint64_t seed, std::span<const Twist> initial) {
  Model model(enc, dec, SceneBounds::with_margin(dataset.bounds_lo, dataset.bounds_hi));
  std::mt19937_64 rng(seed);
  model.tables.init_uniform(rng);
  model.decoder.init_he_uniform(rng);
  model.cameras = dataset.split(false);
  require(initial.empty() || initial.size() == model.cameras.size(),
          "init_model: one initial twist per training camera is required");
  for (std::size_t i = 0; i < model.cameras.size(); ++i) {
    model.poses.push_back(initial.empty() ? log_map(dataset.frames[model.cameras[i]].initial_pose) : initial[i]);
  }
  return model;
}

PoseErrors camera_errors(const Model& model, const SceneDataset& dataset, Similarity* transform) {
  std::vector<Pose> reference;
  for (int c : model.cameras) reference.push_back(dataset.frames[c].pose);
  const std::vector<Pose> learned = model.current_poses();
  const Alignment a = procrustes_align(learned, reference);
  if (transform) *transform = a.transform;
  return pose_errors(a.aligned, reference);
}

TrainState make_train_state(Model model) {
  TrainState s{std::move(model), {}, {}, 0};
  s.adam.tables = AdamMoments(s.model.tables.size());
  s.adam.decoder = AdamMoments(s.model.decoder.size());
  s.adam.poses = AdamMoments(6 * s.model.poses.size());
  return s;
}

RenderConfig training_render_config(const SceneDataset& dataset, int n_samples, bool stratified) {
  RenderConfig rc;
  rc.n_samples = n_samples;
  rc.t_near = dataset.t_near;
  rc.t_far = dataset.t_far;
  rc.stratified = stratified;
  rc.white_background = dataset.white_background;
  rc.validate();
  return rc;
}

void train(const SceneDataset& dataset, const RenderConfig& render, const TrainConfig& config, TrainState& state,
           const ProgressFn& progress) {
  config.validate();
  render.validate();
  Model& model = state.model;
  require(!model.cameras.empty(), "train: no training cameras");
  const WeightMode mode = config.flags.weight_mode();
  const Field field = model.field(mode);
  const Intrinsics& K = dataset.intrinsics;
  const std::size_t pixels_per_image = std::size_t(K.width) * K.height;
  const std::size_t n_cams = model.cameras.size();
  const int levels = model.encoding.config().levels;
  const AdamHyper hyper{config.beta1, config.beta2, config.epsilon};
  const CurriculumSchedule schedule{levels, config.curriculum_start * config.iterations,
                                    config.curriculum_end * config.iterations};
  const int eval_every = std::max(1, int(std::lround(config.eval_fraction * config.iterations)));

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, n_cams * pixels_per_image - 1);
  RenderTape tape;
  RayBatch batch;
  std::vector<PoseDerivatives> derivs(n_cams);
  std::vector<Vec6> pose_grads(n_cams);
  std::vector<double> pose_params(6 * n_cams), pose_flat_grads(6 * n_cams);
  std::vector<double> level_rates(levels, 1.0);
  double loss_sum = 0.0;
  int loss_count = 0;

  while (state.step < config.iterations) {
    const int t = state.step + 1;
    for (std::size_t c = 0; c < n_cams; ++c) derivs[c] = pose_derivatives(model.poses[c]);

    batch.rays.resize(config.batch_rays);
    batch.targets.resize(config.batch_rays);
    batch.jacobians.resize(config.batch_rays);
    batch.cameras.resize(config.batch_rays);
    for (int r = 0; r < config.batch_rays; ++r) {
      const std::size_t idx = pick(rng);
      const std::size_t cam = idx / pixels_per_image;
      const std::size_t pix = idx % pixels_per_image;
      const int u = int(pix % K.width);
      const int v = int(pix / K.width);
      batch.cameras[r] = int(cam);
      batch.rays[r] = generate_ray(u + 0.5, v + 0.5, K, derivs[cam], batch.jacobians[r]);
      const Image& img = dataset.frames[model.cameras[cam]].image;
      for (int c = 0; c < 3; ++c) batch.targets[r][c] = img.at(u, v, c);
    }

    const BatchResult result = render_batch(batch, field, render, rng, &tape, config.threads);
    model.tables.zero_grad();
    model.decoder.zero_grad();
    std::fill(pose_grads.begin(), pose_grads.end(), Vec6::Zero());
    render_backward(tape, batch, result, field, {model.tables.grads, model.decoder.grads, &pose_grads},
                    config.threads);

    for (std::size_t c = 0; c < n_cams; ++c) {
      const Vec6 p = model.poses[c].vector();
      for (int k = 0; k < 6; ++k) {
        pose_params[6 * c + k] = p[k];
        pose_flat_grads[6 * c + k] = pose_grads[c][k];
      }
    }
    for (double g : pose_flat_grads) {
      if (!std::isfinite(g)) throw DivergenceError("train: non-finite pose gradient at step " + std::to_string(t));
    }
    for (double g : model.tables.grads) {
      if (!std::isfinite(g)) throw DivergenceError("train: non-finite table gradient at step " + std::to_string(t));
    }
    for (double g : model.decoder.grads) {
      if (!std::isfinite(g)) throw DivergenceError("train: non-finite decoder gradient at step " + std::to_string(t));
    }

    const double lr = exponential_lr(config.lr_start, config.lr_end, state.step, config.iterations);
    const double pose_lr = exponential_lr(config.pose_lr_start, config.pose_lr_end, state.step, config.iterations);
    for (int l = 0; l < levels; ++l) {
      level_rates[l] = config.flags.curriculum ? curriculum_weight(l + 1, state.step, schedule) : 1.0;
    }
    adam_step(model.tables.values, model.tables.grads, state.adam.tables, hyper, t, lr * config.table_lr_scale,
              level_rates, model.tables.level_stride());
    adam_step(model.decoder.values, model.decoder.grads, state.adam.decoder, hyper, t, lr);
    adam_step(pose_params, pose_flat_grads, state.adam.poses, hyper, t, pose_lr);
    model.decoder.mark_updated();
    for (std::size_t c = 0; c < n_cams; ++c) {
      Vec6 p;
      for (int k = 0; k < 6; ++k) p[k] = pose_params[6 * c + k];
      model.poses[c] = Twist::from_vector(p);
    }
    state.adam.step = t;
    state.step = t;

    loss_sum += result.loss;
    ++loss_count;
    if (t % eval_every == 0 || t == config.iterations) {
      TimelineRow row;
      row.step = t;
      row.loss = loss_sum / loss_count;
      row.psnr = cap_psnr(psnr_from_mse(row.loss));
      const PoseErrors e = camera_errors(model, dataset);
      row.rot_err_deg = e.rotation_deg;
      row.trans_err = e.translation;
      state.timeline.push_back(row);
      if (progress) progress(row);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
}

}  // namespace hashpose
