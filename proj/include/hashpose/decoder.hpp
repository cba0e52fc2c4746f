#pragma once

// Radiance decoder: a ReLU trunk on the hash encoding, a softplus density
// head, and a sigmoid color head that also sees the sinusoidally encoded view
// direction. Forward and reverse passes are written out by hand on top of the
// dense kernels in simd/kernels.hpp.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "hashpose/common.hpp"

namespace hashpose {

struct DecoderConfig {
  int depth = 4;
  int width = 256;
  int view_enc_levels = 4;

  void validate() const;
};

inline int sinusoidal_dim(int levels) { return 6 * levels; }

/// Per level l (0-based) and axis: cos(2^l pi x), sin(2^l pi x).
void sinusoidal_encode(const Vec3& dir, int levels, std::span<double> out);
std::vector<double> sinusoidal_encode(const Vec3& dir, int levels);
/// Pulls dL/d(encoding) back to dL/d(dir).
Vec3 sinusoidal_backward(const Vec3& dir, int levels, std::span<const double> dl_denc);

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // input-major in x out block
  std::size_t bias_offset = 0;
};

/// Flat parameter vector phi with a matching gradient accumulator.
class DecoderParams {
 public:
  DecoderParams() = default;
  DecoderParams(DecoderConfig config, int input_dim);

  const DecoderConfig& config() const { return config_; }
  int input_dim() const { return input_dim_; }
  int dir_dim() const { return sinusoidal_dim(config_.view_enc_levels); }
  std::span<const DenseLayer> layers() const { return layers_; }
  const DenseLayer& trunk(int k) const { return layers_[k]; }
  const DenseLayer& density_head() const { return layers_[config_.depth]; }
  const DenseLayer& feature_head() const { return layers_[config_.depth + 1]; }
  const DenseLayer& color_hidden() const { return layers_[config_.depth + 2]; }
  const DenseLayer& color_out() const { return layers_[config_.depth + 3]; }
  std::size_t size() const { return values.size(); }

  /// He-uniform weights, zero biases.
  void init_he_uniform(std::mt19937_64& rng);
  void zero_grad();
  /// Invalidates every tape recorded against the previous values.
  void mark_updated() { ++version; }

  std::vector<double> values;
  std::vector<double> grads;
  std::uint64_t version = 0;

 private:
  DecoderConfig config_;
  int input_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

/// Activations saved by decoder_forward.
struct DecoderTape {
  std::vector<double> buffer;
  std::uint64_t version = ~std::uint64_t(0);
  double density_preact = 0.0;
};

struct DecoderOutput {
  double sigma = 0.0;
  std::array<double, 3> rgb{};
};

DecoderOutput decoder_forward(std::span<const double> y, std::span<const double> dir_enc,
                              const DecoderParams& params, DecoderTape& tape);

/// Accumulates dL/dphi into `param_grads` and overwrites dl_dy / dl_ddir.
void decoder_backward(double dl_dsigma, const std::array<double, 3>& dl_drgb, const DecoderTape& tape,
                      const DecoderParams& params, std::span<double> param_grads,
                      std::span<double> dl_dy, std::span<double> dl_ddir);

/// Smallest |pre-activation| over every ReLU unit for this input; finite
/// differences need it well away from zero.
double min_relu_margin(std::span<const double> y, std::span<const double> dir_enc, const DecoderParams& params);

double softplus(double x);
double sigmoid(double x);

}  // namespace hashpose
