#pragma once

// On-disk scene datasets: a transforms.json manifest with shared intrinsics
// and 4x4 camera-to-world matrices, PNG images and float32 sidecars.

#include <filesystem>
#include <string>
#include <vector>

#include "hashpose/image.hpp"
#include "hashpose/pose.hpp"
#include "hashpose/renderer.hpp"

namespace hashpose {

struct Frame {
  std::string name;
  Image image;
  Pose pose;          // ground truth
  Pose initial_pose;  // starting point for refinement
  bool test = false;
};

struct SceneDataset {
  Intrinsics intrinsics;
  Vec3 bounds_lo = Vec3::Constant(-1.0);
  Vec3 bounds_hi = Vec3::Constant(1.0);
  double t_near = 2.0;
  double t_far = 6.5;
  bool white_background = true;
  std::vector<Frame> frames;

  void validate() const;
  std::vector<int> split(bool test) const;
};

/// Writes transforms.json, images/<name>.png and images/<name>.f32.
void save_dataset(const SceneDataset& dataset, const std::filesystem::path& dir);

/// Reads the float sidecars when present, the PNGs otherwise.
SceneDataset load_dataset(const std::filesystem::path& dir);

}  // namespace hashpose
