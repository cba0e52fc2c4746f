#include "hashpose/experiment.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "hashpose/checkpoint.hpp"
#include "hashpose/image.hpp"
#include "hashpose/io.hpp"
#include "hashpose/scene.hpp"

namespace hashpose {
namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t noise_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x6e6f697365ULL); }
std::uint64_t init_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x696e6974ULL); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

json flags_json(const AblationFlags& f) {
  return {{"straight_through", f.straight_through}, {"smooth_grad", f.smooth_grad}, {"curriculum", f.curriculum}};
}

MetricsReport average(const std::vector<MetricsReport>& runs) {
  MetricsReport m;
  for (const MetricsReport& r : runs) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.rot_err_deg += r.rot_err_deg;
    m.trans_err += r.trans_err;
    m.initial_rot_err_deg += r.initial_rot_err_deg;
  }
  const double n = double(runs.size());
  m.psnr /= n;
  m.ssim /= n;
  m.rot_err_deg /= n;
  m.trans_err /= n;
  m.initial_rot_err_deg /= n;
  return m;
}

void write_artifacts(const std::filesystem::path& out_dir, const ExperimentConfig& config, const Model& model,
                     int step, const std::vector<TimelineRow>& timeline) {
  write_file_atomic(out_dir / "config.json", config_to_json(config) + "\n");
  write_file_atomic(out_dir / "timeline.csv", timeline_to_csv(timeline));
  save_checkpoint(out_dir / "checkpoint", config, model, step);
}

}  // namespace

SceneDataset prepare_dataset(const ExperimentConfig& config) {
  if (!config.dataset.empty()) {
    require(std::filesystem::is_directory(config.dataset), "dataset directory " + config.dataset + " not found");
    return load_dataset(config.dataset);
  }
  std::mt19937_64 rng(config.scene_seed);
  return generate_scene(config.scene, config.views, rng);
}

std::vector<Twist> initial_twists(const SceneDataset& dataset, double sigma, std::uint64_t seed) {
  std::vector<Pose> poses;
  for (int i : dataset.split(false)) poses.push_back(dataset.frames[i].initial_pose);
  return perturb_poses(poses, sigma, noise_seed(seed));
}

std::string report_to_json(const MetricsReport& r) {
  json j;
  j["name"] = r.name;
  j["seed"] = r.seed;
  j["flags"] = flags_json(r.flags);
  j["lambda"] = r.lambda;
  j["steps"] = r.steps;
  j["metrics"] = {{"psnr", r.psnr},
                  {"ssim", r.ssim},
                  {"lpips", nullptr},
                  {"rot_err_deg", r.rot_err_deg},
                  {"trans_err", r.trans_err},
                  {"initial_rot_err_deg", r.initial_rot_err_deg},
                  {"initial_trans_err", r.initial_trans_err}};
  j["views"] = json::array();
  for (const ViewMetrics& v : r.views) j["views"].push_back({{"name", v.name}, {"psnr", v.psnr}, {"ssim", v.ssim}});
  return j.dump(2) + "\n";
}

std::string timeline_to_csv(const std::vector<TimelineRow>& rows) {
  std::string out = "step,loss,psnr,rot_err_deg,trans_err\n";
  for (const TimelineRow& r : rows) {
    out += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.psnr) + "," + fmt(r.rot_err_deg) + "," +
           fmt(r.trans_err) + "\n";
  }
  return out;
}

Evaluation evaluate_model(const Model& model, const SceneDataset& dataset, const RenderConfig& render,
                          WeightMode mode, int threads) {
  Evaluation ev;
  Similarity to_reference;
  const PoseErrors errors = camera_errors(model, dataset, &to_reference);
  ev.metrics.rot_err_deg = errors.rotation_deg;
  ev.metrics.trans_err = errors.translation;
  const Similarity to_learned = to_reference.inverse();
  const Field field = model.field(mode);
  std::vector<int> held_out = dataset.split(true);
  for (int i : held_out) {
    const Frame& f = dataset.frames[i];
    Image img(dataset.intrinsics.width, dataset.intrinsics.height);
    img.rgb = render_image(dataset.intrinsics, to_learned.apply(f.pose), field, render, threads);
    ViewMetrics vm{f.name, cap_psnr(psnr(img, f.image)), ssim(img, f.image)};
    ev.metrics.psnr += vm.psnr;
    ev.metrics.ssim += vm.ssim;
    ev.metrics.views.push_back(vm);
    ev.renders.push_back(std::move(img));
  }
  if (!held_out.empty()) {
    ev.metrics.psnr /= double(held_out.size());
    ev.metrics.ssim /= double(held_out.size());
  }
  return ev;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                const ProgressFn& progress) {
  config.validate();
  return run_experiment(config, prepare_dataset(config), out_dir, progress);
}

ExperimentResult run_experiment(const ExperimentConfig& config, const SceneDataset& dataset,
                                const std::filesystem::path& out_dir, const ProgressFn& progress) {
  config.validate();
  dataset.validate();
  require(dataset.split(false).size() >= 3, "experiment: need at least three training views");

  const std::vector<Twist> init = initial_twists(dataset, config.pose_noise, config.seed);
  TrainState state =
      make_train_state(init_model(dataset, config.encoding, config.decoder, init_seed(config.seed), init));
  const PoseErrors initial = camera_errors(state.model, dataset);
  const RenderConfig render = training_render_config(dataset, config.n_samples, config.stratified);
  TrainConfig tc = config.train;
  tc.seed = config.seed;

  try {
    train(dataset, render, tc, state, progress);
  } catch (const DivergenceError&) {
    if (!out_dir.empty()) write_artifacts(out_dir, config, state.model, state.step, state.timeline);
    throw;
  }

  const Evaluation ev = evaluate_model(state.model, dataset, render, tc.flags.weight_mode(), tc.threads);
  ExperimentResult result;
  result.report = ev.metrics;
  result.report.name = config.name;
  result.report.seed = config.seed;
  result.report.flags = tc.flags;
  result.report.lambda = config.encoding.lambda;
  result.report.steps = state.step;
  result.report.initial_rot_err_deg = initial.rotation_deg;
  result.report.initial_trans_err = initial.translation;
  result.timeline = state.timeline;

  if (!out_dir.empty()) {
    write_artifacts(out_dir, config, state.model, state.step, state.timeline);
    write_file_atomic(out_dir / "report.json", report_to_json(result.report));
    const std::vector<int> held_out = dataset.split(true);
    const std::size_t n_render =
        config.render_views < 0 ? held_out.size() : std::min<std::size_t>(config.render_views, held_out.size());
    for (std::size_t k = 0; k < n_render; ++k) {
      write_png(out_dir / "renders" / (dataset.frames[held_out[k]].name + ".png"), ev.renders[k]);
    }
  }
  return result;
}

std::vector<AblationRow> component_rows() {
  return {{"a", {true, true, true}},
          {"b", {false, true, true}},
          {"c", {false, false, true}},
          {"d", {true, true, false}},
          {"e", {false, false, false}}};
}

std::vector<SummaryRow> run_ablation(const ExperimentConfig& config, const std::vector<AblationRow>& rows,
                                     const std::filesystem::path& out_dir, const ProgressFn& progress) {
  config.validate();
  const SceneDataset dataset = prepare_dataset(config);
  std::vector<SummaryRow> out;
  for (const AblationRow& row : rows) {
    SummaryRow s;
    s.id = row.id;
    s.flags = row.flags;
    s.lambda = config.encoding.lambda;
    for (std::uint64_t seed : config.ablation.seeds) {
      ExperimentConfig c = config;
      c.seed = seed;
      c.train.seed = seed;
      c.train.flags = row.flags;
      c.name = config.name + "-" + row.id;
      const auto dir = out_dir.empty() ? out_dir : out_dir / row.id / ("seed_" + std::to_string(seed));
      s.runs.push_back(run_experiment(c, dataset, dir, progress).report);
    }
    const MetricsReport mean = average(s.runs);
    s.psnr = mean.psnr;
    s.ssim = mean.ssim;
    s.rot_err_deg = mean.rot_err_deg;
    s.trans_err = mean.trans_err;
    s.initial_rot_err_deg = mean.initial_rot_err_deg;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SummaryRow> run_lambda_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                         const ProgressFn& progress) {
  config.validate();
  const AblationRow full = component_rows().front();
  std::vector<SummaryRow> out;
  for (double lambda : config.ablation.lambdas) {
    ExperimentConfig c = config;
    c.encoding.lambda = lambda;
    const auto dir = out_dir.empty() ? out_dir : out_dir / ("lambda_" + fmt(lambda));
    std::vector<SummaryRow> rows = run_ablation(c, {full}, dir, progress);
    rows.front().id = "lambda=" + fmt(lambda);
    out.push_back(std::move(rows.front()));
  }
  return out;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "row,straight_through,smooth_grad,curriculum,lambda,psnr,ssim,rot_err_deg,trans_err,"
                    "initial_rot_err_deg\n";
  for (const SummaryRow& r : rows) {
    out += r.id + "," + std::to_string(int(r.flags.straight_through)) + "," +
           std::to_string(int(r.flags.smooth_grad)) + "," + std::to_string(int(r.flags.curriculum)) + "," +
           fmt(r.lambda) + "," + fmt(r.psnr) + "," + fmt(r.ssim) + "," + fmt(r.rot_err_deg) + "," +
           fmt(r.trans_err) + "," + fmt(r.initial_rot_err_deg) + "\n";
  }
  return out;
}

std::string summary_to_json(const std::vector<SummaryRow>& rows) {
  json j = json::array();
  for (const SummaryRow& r : rows) {
    json runs = json::array();
    for (const MetricsReport& m : r.runs) {
      runs.push_back({{"seed", m.seed},
                      {"psnr", m.psnr},
                      {"ssim", m.ssim},
                      {"rot_err_deg", m.rot_err_deg},
                      {"trans_err", m.trans_err},
                      {"initial_rot_err_deg", m.initial_rot_err_deg}});
    }
    j.push_back({{"row", r.id},
                 {"flags", flags_json(r.flags)},
                 {"lambda", r.lambda},
                 {"psnr", r.psnr},
                 {"ssim", r.ssim},
                 {"rot_err_deg", r.rot_err_deg},
                 {"trans_err", r.trans_err},
                 {"initial_rot_err_deg", r.initial_rot_err_deg},
                 {"runs", runs}});
  }
  return j.dump(2) + "\n";
}

}  // namespace hashpose
