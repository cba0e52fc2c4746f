#pragma once

// Experiment files: one JSON object covering every module. Every field has a
// default and unknown fields are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hashpose/decoder.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/scene.hpp"
#include "hashpose/trainer.hpp"

namespace hashpose {

struct ProfileConfig {
  int resolution = 8;
  int n_samples = 400;
  double lambda = 1.0;
  std::string table = "random";  // random | alternating | constant
  std::uint64_t seed = 0;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> lambdas{0.5, 1.0, 2.0, 4.0};
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  /// Dataset directory; empty means generate from `scene` and `views`.
  std::string dataset;
  SceneSpec scene = SceneSpec::default_scene();
  ViewConfig views;
  std::uint64_t scene_seed = 0;
  double pose_noise = 0.15;
  EncodingConfig encoding;
  DecoderConfig decoder;
  int n_samples = 64;
  bool stratified = true;
  TrainConfig train;
  /// Test views written to renders/ (all of them when negative).
  int render_views = -1;
  AblationConfig ablation;
  ProfileConfig profile;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// Scene-only files for gen-scene: {"scene": {...}, "views": {...}, "seed": n}.
struct SceneFile {
  SceneSpec scene = SceneSpec::default_scene();
  ViewConfig views;
  std::uint64_t seed = 0;
};

SceneFile load_scene_file(const std::filesystem::path& path);

}  // namespace hashpose
