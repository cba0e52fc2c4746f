// hashpose: train, evaluate, ablate and diagnose hash-encoded radiance fields
// with joint camera refinement.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "hashpose/checkpoint.hpp"
#include "hashpose/config.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/experiment.hpp"
#include "hashpose/gradcheck.hpp"
#include "hashpose/io.hpp"
#include "hashpose/scene.hpp"
#include "hashpose/simd/kernels.hpp"

namespace hp = hashpose;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitUsage = 64;

void print_row(const hp::TimelineRow& r) {
  std::fprintf(stderr, "step %6d  loss %.6f  psnr %6.2f  rot %8.4f deg  trans %.6f\n", r.step, r.loss, r.psnr,
               r.rot_err_deg, r.trans_err);
}

void print_report(const hp::MetricsReport& r) {
  std::printf("psnr %.3f  ssim %.4f  rot_err %.4f deg (from %.4f)  trans_err %.6f (from %.6f)\n", r.psnr, r.ssim,
              r.rot_err_deg, r.initial_rot_err_deg, r.trans_err, r.initial_trans_err);
}

hp::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  hp::ExperimentConfig c = hp::load_config(path);
  if (seed) {
    c.seed = *seed;
    c.train.seed = *seed;
  }
  return c;
}

fs::path out_dir(const std::string& flag, const std::string& name) {
  return flag.empty() ? hp::output_root() / name : fs::path(flag);
}

std::vector<hp::AblationRow> select_rows(const std::string& ids) {
  std::vector<hp::AblationRow> all = hp::component_rows();
  if (ids.empty()) return all;
  std::vector<hp::AblationRow> out;
  std::stringstream ss(ids);
  std::string id;
  while (std::getline(ss, id, ',')) {
    bool found = false;
    for (const auto& r : all) {
      if (r.id == id) {
        out.push_back(r);
        found = true;
      }
    }
    hp::require(found, "ablate: unknown row '" + id + "' (expected a..e)");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hash-encoded radiance fields with joint camera pose refinement"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "No per-evaluation progress lines");

  std::string config_path, checkpoint_path, dataset_path, spec_path, out_flag, module = "all", rows;
  std::optional<std::uint64_t> seed;
  int n_seeds = 5;
  bool lambda_sweep = false;

  auto* train = app.add_subcommand("train", "Run one experiment");
  train->add_option("config", config_path, "Experiment JSON")->required();
  train->add_option("--seed", seed, "Overrides the config seed");
  train->add_option("--out", out_flag, "Output directory (default $HASHPOSE_OUTPUT_ROOT/<name>)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint directory")->required();
  eval->add_option("dataset", dataset_path, "Dataset directory")->required();
  eval->add_option("--out", out_flag, "Write report.json and renders here");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every backward pass");
  grad->add_option("--module", module, "all | encoding | decoder | pose | render")
      ->check(CLI::IsMember({"all", "encoding", "decoder", "pose", "render"}));
  grad->add_option("--seeds", n_seeds, "Check seeds 0..n-1")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Component ablation grid (rows a..e) or lambda sweep");
  ablate->add_option("config", config_path, "Experiment JSON")->required();
  ablate->add_option("--rows", rows, "Comma-separated subset of a,b,c,d,e");
  ablate->add_flag("--lambda-sweep", lambda_sweep, "Sweep ablation.lambdas with all components on");
  ablate->add_option("--out", out_flag, "Output directory");

  auto* profile = app.add_subcommand("profile-derivative", "1-D derivative profile CSV (raw and smoothed)");
  profile->add_option("config", config_path, "Experiment JSON")->required();
  profile->add_option("--out", out_flag, "Output directory");

  auto* gen = app.add_subcommand("gen-scene", "Render a synthetic dataset");
  gen->add_option("spec", spec_path, "Scene JSON")->required();
  gen->add_option("--seed", seed, "Overrides the scene seed");
  gen->add_option("--out", out_flag, "Dataset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  const hp::ProgressFn progress = quiet ? hp::ProgressFn{} : hp::ProgressFn{print_row};
  try {
    if (*train) {
      const hp::ExperimentConfig c = load(config_path, seed);
      const fs::path dir = out_dir(out_flag, c.name);
      std::fprintf(stderr, "kernels: %s\n", std::string(hp::simd::isa_name(hp::simd::kernels().isa)).c_str());
      const hp::ExperimentResult r = hp::run_experiment(c, dir, progress);
      print_report(r.report);
      std::printf("artifacts: %s\n", dir.string().c_str());
    } else if (*eval) {
      const hp::Checkpoint ck = hp::load_checkpoint(checkpoint_path);
      const hp::SceneDataset ds = hp::load_dataset(dataset_path);
      hp::require(ck.model.cameras.size() == ds.split(false).size(),
                  "eval: checkpoint and dataset disagree on the number of training cameras");
      const hp::RenderConfig rc = hp::training_render_config(ds, ck.config.n_samples);
      const hp::Evaluation ev =
          hp::evaluate_model(ck.model, ds, rc, ck.config.train.flags.weight_mode(), ck.config.train.threads);
      hp::MetricsReport report = ev.metrics;
      report.name = ck.config.name;
      report.seed = ck.config.seed;
      report.flags = ck.config.train.flags;
      report.lambda = ck.config.encoding.lambda;
      report.steps = ck.step;
      if (!out_flag.empty()) {
        hp::write_file_atomic(fs::path(out_flag) / "report.json", hp::report_to_json(report));
        const auto held_out = ds.split(true);
        for (std::size_t k = 0; k < held_out.size(); ++k) {
          hp::write_png(fs::path(out_flag) / "renders" / (ds.frames[held_out[k]].name + ".png"), ev.renders[k]);
        }
      }
      std::printf("psnr %.3f  ssim %.4f  rot_err %.4f deg  trans_err %.6f\n", report.psnr, report.ssim,
                  report.rot_err_deg, report.trans_err);
    } else if (*grad) {
      bool ok = true;
      for (int s = 0; s < n_seeds; ++s) {
        for (const hp::GradcheckResult& r : hp::run_gradcheck(module, std::uint64_t(s))) {
          std::printf("seed %d  %-22s max_rel_err %.3e  (tol %.0e, %d checks)  %s\n", s, r.family.c_str(),
                      r.max_rel_err, r.tolerance, r.checks, r.pass() ? "ok" : "FAIL");
          ok = ok && r.pass();
        }
      }
      return ok ? 0 : kExitValidation;
    } else if (*ablate) {
      const hp::ExperimentConfig c = load(config_path, std::nullopt);
      const fs::path dir = out_dir(out_flag, c.name + (lambda_sweep ? "-lambda" : "-ablation"));
      const std::vector<hp::SummaryRow> summary =
          lambda_sweep ? hp::run_lambda_sweep(c, dir, progress) : hp::run_ablation(c, select_rows(rows), dir, progress);
      const std::string stem = lambda_sweep ? "lambda_sweep" : "ablation";
      hp::write_file_atomic(dir / (stem + ".csv"), hp::summary_to_csv(summary));
      hp::write_file_atomic(dir / (stem + ".json"), hp::summary_to_json(summary));
      std::cout << hp::summary_to_csv(summary);
    } else if (*profile) {
      const hp::ExperimentConfig c = load(config_path, std::nullopt);
      const hp::ProfileConfig& p = c.profile;
      std::vector<double> table(p.resolution + 1, 0.5);
      if (p.table == "alternating") {
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = double(i % 2);
      } else if (p.table == "random") {
        std::mt19937_64 rng(p.seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (double& v : table) v = u(rng);
      }
      std::ostringstream csv;
      hp::write_profile_csv(csv, hp::derivative_profile_1d(table, p.resolution, p.n_samples, hp::JacobianMode::kRaw,
                                                           p.lambda),
                            hp::JacobianMode::kRaw, true);
      hp::write_profile_csv(csv, hp::derivative_profile_1d(table, p.resolution, p.n_samples,
                                                           hp::JacobianMode::kSmoothed, p.lambda),
                            hp::JacobianMode::kSmoothed, false);
      const fs::path dir = out_dir(out_flag, c.name);
      hp::write_file_atomic(dir / "derivative_profile.csv", csv.str());
      std::printf("%s\n", (dir / "derivative_profile.csv").string().c_str());
    } else if (*gen) {
      hp::SceneFile f = hp::load_scene_file(spec_path);
      if (seed) f.seed = *seed;
      std::mt19937_64 rng(f.seed);
      const hp::SceneDataset ds = hp::generate_scene(f.scene, f.views, rng);
      const fs::path dir = out_dir(out_flag, fs::path(spec_path).stem().string());
      hp::save_dataset(ds, dir);
      std::printf("%s\n", dir.string().c_str());
    }
  } catch (const hp::DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const hp::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return 0;
}
