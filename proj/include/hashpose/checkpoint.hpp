#pragma once

// Checkpoints: params.bin holds the raw little-endian float64 tensors back to
// back (tables, decoder, twists); manifest.json records shapes, offsets, the
// experiment config and the step.

#include <filesystem>

#include "hashpose/config.hpp"
#include "hashpose/trainer.hpp"

namespace hashpose {

struct Checkpoint {
  ExperimentConfig config;
  Model model;
  int step = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& config, const Model& model,
                     int step);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace hashpose
