#pragma once

// Central finite-difference checks of every hand-written backward pass.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hashpose {

struct GradcheckResult {
  std::string family;
  double max_rel_err = 0.0;
  int checks = 0;
  double tolerance = 0.0;

  bool pass() const { return checks > 0 && max_rel_err < tolerance; }
};

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-6 * max_j |n_j|, 1e-300).
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// d-linear and smooth-forward input gradients at `points` interior points
/// (d = 3, L = 8), plus the table gradient.
std::vector<GradcheckResult> gradcheck_encoding(std::uint64_t seed, int points = 200);
/// Every decoder parameter and both inputs.
std::vector<GradcheckResult> gradcheck_decoder(std::uint64_t seed);
/// Ray origin / direction / point Jacobians over the twist.
std::vector<GradcheckResult> gradcheck_pose(std::uint64_t seed);
/// Batch loss of a 4-ray, 16-sample scene against twists, tables and decoder.
std::vector<GradcheckResult> gradcheck_render(std::uint64_t seed);

/// module: all | encoding | decoder | pose | render.
std::vector<GradcheckResult> run_gradcheck(const std::string& module, std::uint64_t seed);

}  // namespace hashpose
