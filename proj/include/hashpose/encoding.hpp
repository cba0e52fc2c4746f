#pragma once

// Multi-resolution hash grid encoding.
//
// Each level l scales x in [0,1]^d by N_l, looks up the 2^d corners of the
// enclosing lattice cell in that level's table (one-to-one when the level is
// dense, spatially hashed otherwise) and d-linearly interpolates their feature
// vectors. The backward pass supports three weight treatments: plain d-linear,
// a straight-through smooth gradient (forward unchanged, backward weight
// gradients scaled by 1 + lambda*(pi/2)*sin(pi*w)), and the smooth cosine
// weighting used directly in the forward pass.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "hashpose/common.hpp"

namespace hashpose {

inline constexpr int kMaxEncodingDim = 3;
inline constexpr int kMaxCorners = 1 << kMaxEncodingDim;

enum class WeightMode {
  kLinear,           // plain d-linear interpolation
  kStraightThrough,  // d-linear forward, smooth-gradient backward
  kSmooth,           // cosine-smoothed, renormalized weights in both passes
};

enum class JacobianMode { kRaw, kSmoothed };

struct EncodingConfig {
  int levels = 8;
  std::uint32_t table_size = 1u << 14;
  int features = 2;
  int n_min = 4;
  int n_max = 64;
  int dim = 3;
  double lambda = 1.0;
  /// One odd multiplier per axis; empty selects the defaults for `dim`.
  std::vector<std::uint64_t> primes;

  void validate() const;
  std::vector<std::uint64_t> effective_primes() const;
};

std::vector<std::uint64_t> default_primes(int dim);

struct LevelSpec {
  int level = 1;  // 1-based
  int resolution = 1;
  bool dense = false;
};

double growth_factor(const EncodingConfig& config);
std::vector<LevelSpec> resolution_schedule(const EncodingConfig& config);

/// Table index of a lattice vertex. Dense levels use the row-major vertex
/// index (last axis fastest); hashed levels XOR the wrapped 64-bit products
/// corner_i * prime_i and keep the low log2(T) bits.
std::uint32_t spatial_hash(std::span<const std::uint32_t> corner, const LevelSpec& level,
                           const EncodingConfig& config);

/// d-linear weights of the 2^d cell corners and their derivatives with
/// respect to the scaled coordinate. Corner i takes the upper vertex along
/// axis k when bit k of i is set.
struct InterpWeights {
  int dim = 0;
  std::array<double, kMaxCorners> w{};
  std::array<std::array<double, kMaxEncodingDim>, kMaxCorners> dw{};
};

InterpWeights interp_weights(std::span<const double> x_level, std::span<const std::int32_t> cell);

/// cos-ramp delta(w) = (1 - cos(pi w)) / 2.
double smooth_activation(double w);
/// Multiplier the straight-through rule applies to an incoming weight gradient.
double smooth_backward_scale(double w, double lambda);

struct SmoothWeights {
  std::vector<double> value;           // forward weights (equal to the inputs)
  std::vector<double> backward_scale;  // 1 + lambda * (pi/2) * sin(pi w)
};

/// Straight-through reparameterization of a weight set. Throws if any weight
/// is outside [0, 1] by more than 1e-12.
SmoothWeights smooth_weights(std::span<const double> w, double lambda);

/// Per-sample, per-level state saved by the forward pass.
struct LevelContext {
  std::array<std::uint32_t, kMaxCorners> index{};
  std::array<double, kMaxCorners> weight{};          // raw d-linear weights
  std::array<double, kMaxCorners> forward_weight{};  // weights actually used forward
  std::array<double, kMaxEncodingDim> frac{};
  std::array<std::int32_t, kMaxEncodingDim> cell{};
  std::uint8_t clamped_axes = 0;  // bit k set when x_k was clamped into [0, 1]
};

struct HashTables {
  int levels = 0;
  std::uint32_t table_size = 0;
  int features = 0;
  std::vector<double> values;
  std::vector<double> grads;

  HashTables() = default;
  HashTables(int levels, std::uint32_t table_size, int features);

  std::size_t level_stride() const { return std::size_t(table_size) * features; }
  std::size_t size() const { return values.size(); }
  double* entry(int level0, std::uint32_t index) {
    return values.data() + level0 * level_stride() + std::size_t(index) * features;
  }
  const double* entry(int level0, std::uint32_t index) const {
    return values.data() + level0 * level_stride() + std::size_t(index) * features;
  }

  /// U[0, 1e-4] initialization.
  void init_uniform(std::mt19937_64& rng, double high = 1e-4);
  void zero_grad();
};

struct EncodingOutput {
  std::vector<double> y;
  std::vector<LevelContext> context;
};

class HashEncoding {
 public:
  explicit HashEncoding(EncodingConfig config);

  const EncodingConfig& config() const { return config_; }
  std::span<const LevelSpec> levels() const { return levels_; }
  int input_dim() const { return config_.dim; }
  int output_dim() const { return config_.levels * config_.features; }
  HashTables make_tables() const;

  /// Low-allocation forward used by the renderer. `y` has output_dim()
  /// entries and `context` has one slot per level. Returns true when any
  /// coordinate had to be clamped into the unit cube.
  bool encode(std::span<const double> x, const HashTables& tables, WeightMode mode,
              std::span<double> y, std::span<LevelContext> context) const;

  EncodingOutput encode(std::span<const double> x, const HashTables& tables,
                        WeightMode mode) const;

  /// Accumulates dL/dtheta into `table_grads` (same layout as tables.values)
  /// and overwrites `dx` with dL/dx. Clamped axes receive zero gradient.
  void backward(std::span<const double> dl_dy, std::span<const LevelContext> context,
                const HashTables& tables, WeightMode mode, std::span<double> table_grads,
                std::span<double> dx) const;

  /// d y / d x as a row-major (L*F) x d matrix, evaluated from the interior
  /// formula. Throws ValidationError when x lies on a cell face at any level
  /// or outside the unit cube. Diagnostics only.
  std::vector<double> input_jacobian(std::span<const double> x, const HashTables& tables,
                                     JacobianMode mode) const;

 private:
  void fill_level(int level0, std::span<const double> x, std::uint8_t clamped,
                  WeightMode mode, LevelContext& ctx) const;

  EncodingConfig config_;
  std::vector<LevelSpec> levels_;
  std::vector<std::uint64_t> primes_;
  std::uint64_t mask_ = 0;
};

struct ProfileRow {
  double x = 0.0;
  double h = 0.0;
  double dh_dx = 0.0;
};

/// Samples a single-level 1D encoding (scalar feature, one entry per vertex
/// 0..resolution) at x_s = (s + 0.5) / n_samples and reports the value and
/// derivative under the raw or smoothed backward rule.
std::vector<ProfileRow> derivative_profile_1d(std::span<const double> table, int resolution,
                                              int n_samples, JacobianMode mode, double lambda);

void write_profile_csv(std::ostream& out, std::span<const ProfileRow> rows, JacobianMode mode,
                       bool header = true);

}  // namespace hashpose
