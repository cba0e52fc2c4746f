#pragma once

// End-to-end runs: dataset preparation, pose perturbation, training,
// Procrustes alignment, held-out evaluation and artifact writing; plus the
// component ablation grid and the lambda sweep built on top of it.

#include <filesystem>
#include <string>
#include <vector>

#include "hashpose/config.hpp"
#include "hashpose/dataset.hpp"
#include "hashpose/trainer.hpp"

namespace hashpose {

SceneDataset prepare_dataset(const ExperimentConfig& config);

/// Noisy starting twists for the training cameras, drawn around each frame's
/// initial pose.
std::vector<Twist> initial_twists(const SceneDataset& dataset, double sigma, std::uint64_t seed);

struct ViewMetrics {
  std::string name;
  double psnr = 0.0;  // capped
  double ssim = 0.0;
};

struct MetricsReport {
  std::string name;
  std::uint64_t seed = 0;
  AblationFlags flags;
  double lambda = 1.0;
  int steps = 0;
  double psnr = 0.0;  // mean over held-out views, capped
  double ssim = 0.0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  double initial_rot_err_deg = 0.0;
  double initial_trans_err = 0.0;
  std::vector<ViewMetrics> views;
};

std::string report_to_json(const MetricsReport& report);
std::string timeline_to_csv(const std::vector<TimelineRow>& rows);

struct Evaluation {
  MetricsReport metrics;           // psnr, ssim, pose errors and views filled in
  std::vector<Image> renders;      // one per held-out view
};

/// Renders each held-out view from its ground-truth pose carried into the
/// learned frame by the inverse of the camera alignment.
Evaluation evaluate_model(const Model& model, const SceneDataset& dataset, const RenderConfig& render,
                          WeightMode mode, int threads = 1);

struct ExperimentResult {
  MetricsReport report;
  std::vector<TimelineRow> timeline;
};

/// Writes report.json, timeline.csv, renders/*.png, config.json and
/// checkpoint/ under `out_dir` (nothing when empty). On divergence the
/// partial timeline and the last good checkpoint are written before the
/// DivergenceError propagates.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const ProgressFn& progress = {});

/// As above on an already prepared dataset.
ExperimentResult run_experiment(const ExperimentConfig& config, const SceneDataset& dataset,
                                const std::filesystem::path& out_dir, const ProgressFn& progress = {});

struct AblationRow {
  std::string id;  // "a" .. "e"
  AblationFlags flags;
};

/// (a) ST + smooth + curriculum, (b) smooth + curriculum, (c) curriculum only,
/// (d) ST + smooth, (e) none.
std::vector<AblationRow> component_rows();

struct SummaryRow {
  std::string id;
  AblationFlags flags;
  double lambda = 1.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  double initial_rot_err_deg = 0.0;
  std::vector<MetricsReport> runs;  // one per seed
};

/// Runs each row for every seed in config.ablation.seeds and averages.
std::vector<SummaryRow> run_ablation(const ExperimentConfig& config, const std::vector<AblationRow>& rows,
                                     const std::filesystem::path& out_dir, const ProgressFn& progress = {});

/// Full configuration (a) for every lambda in config.ablation.lambdas.
std::vector<SummaryRow> run_lambda_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                         const ProgressFn& progress = {});

std::string summary_to_csv(const std::vector<SummaryRow>& rows);
std::string summary_to_json(const std::vector<SummaryRow>& rows);

}  // namespace hashpose
