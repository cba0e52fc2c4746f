#include "hashpose/encoding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <set>
#include <string>

namespace hashpose {
namespace {

constexpr double kPi = std::numbers::pi;

struct CornerTerms {
  std::array<double, kMaxCorners> w{};
  std::array<std::array<double, kMaxEncodingDim>, kMaxCorners> dw{};
};

// Products of 1D opposite distances. frac_k is the offset from the lower
// vertex along axis k.
inline void corner_terms(int dim, const double* frac, CornerTerms& out) {
  const int corners = 1 << dim;
  for (int i = 0; i < corners; ++i) {
    double one_d[kMaxEncodingDim];
    double prod = 1.0;
    for (int k = 0; k < dim; ++k) {
      one_d[k] = (i >> k) & 1 ? frac[k] : 1.0 - frac[k];
      prod *= one_d[k];
    }
    out.w[i] = prod;
    for (int k = 0; k < dim; ++k) {
      double others = (i >> k) & 1 ? 1.0 : -1.0;
      for (int j = 0; j < dim; ++j) {
        if (j != k) others *= one_d[j];
      }
      out.dw[i][k] = others;
    }
  }
}

std::string mode_name(JacobianMode mode) { return mode == JacobianMode::kRaw ? "raw" : "smoothed"; }

}  // namespace

std::vector<std::uint64_t> default_primes(int dim) {
  static constexpr std::uint64_t kPrimes[] = {1ull, 2654435761ull, 805459861ull};
  require(dim >= 1 && dim <= kMaxEncodingDim, "encoding dim must be 1, 2 or 3");
  return {kPrimes, kPrimes + dim};
}

std::vector<std::uint64_t> EncodingConfig::effective_primes() const {
  return primes.empty() ? default_primes(dim) : primes;
}

void EncodingConfig::validate() const {
  require(levels >= 1, "encoding: levels must be >= 1");
  require(table_size >= 1 && std::has_single_bit(table_size),
          "encoding: table_size must be a power of two");
  require(features >= 1, "encoding: features must be >= 1");
  require(n_min >= 1, "encoding: n_min must be >= 1");
  require(n_max >= n_min, "encoding: n_max must be >= n_min");
  require(dim >= 1 && dim <= kMaxEncodingDim, "encoding: dim must be 1, 2 or 3");
  require(std::isfinite(lambda) && lambda >= 0.0, "encoding: lambda must be finite and >= 0");
  if (!primes.empty()) {
    require(int(primes.size()) == dim, "encoding: need one prime per input dimension");
    require(primes[0] == 1, "encoding: the first prime is fixed to 1");
    require(std::set<std::uint64_t>(primes.begin(), primes.end()).size() == primes.size(),
            "encoding: primes must be pairwise distinct");
    for (auto p : primes) require(p % 2 == 1, "encoding: primes must be odd");
  }
}

double growth_factor(const EncodingConfig& config) {
  if (config.levels == 1) return 1.0;
  return std::exp((std::log(double(config.n_max)) - std::log(double(config.n_min))) /
                  double(config.levels - 1));
}

std::vector<LevelSpec> resolution_schedule(const EncodingConfig& config) {
  require(config.levels >= 1, "resolution_schedule: levels must be >= 1");
  require(config.n_min >= 1 && config.n_max >= config.n_min,
          "resolution_schedule: need 1 <= n_min <= n_max");
  const double b = growth_factor(config);
  std::vector<LevelSpec> specs;
  specs.reserve(config.levels);
  for (int l = 1; l <= config.levels; ++l) {
    const double scaled = double(config.n_min) * std::pow(b, double(l - 1));
    // Relative slack keeps exact powers such as 16 * 32 from flooring to 511.
    int n = int(std::floor(scaled * (1.0 + 1e-12)));
    n = std::clamp(n, config.n_min, config.n_max);
    std::uint64_t vertices = 1;
    bool dense = true;
    for (int k = 0; k < config.dim; ++k) {
      vertices *= std::uint64_t(n) + 1;
      if (vertices > config.table_size) {
        dense = false;
        break;
      }
    }
    specs.push_back({l, n, dense});
  }
  return specs;
}

std::uint32_t spatial_hash(std::span<const std::uint32_t> corner, const LevelSpec& level,
                           const EncodingConfig& config) {
  require(int(corner.size()) == config.dim, "spatial_hash: corner dimension mismatch");
  const std::uint64_t mask = std::uint64_t(config.table_size) - 1;
  if (level.dense) {
    std::uint64_t index = 0;
    for (int k = 0; k < config.dim; ++k) index = index * (std::uint64_t(level.resolution) + 1) + corner[k];
    return std::uint32_t(index);
  }
  const auto primes = config.effective_primes();
  std::uint64_t h = 0;
  for (int k = 0; k < config.dim; ++k) h ^= std::uint64_t(corner[k]) * primes[k];
  return std::uint32_t(h & mask);
}

InterpWeights interp_weights(std::span<const double> x_level, std::span<const std::int32_t> cell) {
  require(x_level.size() == cell.size() && !x_level.empty() && x_level.size() <= kMaxEncodingDim,
          "interp_weights: dimension mismatch");
  InterpWeights out;
  out.dim = int(x_level.size());
  double frac[kMaxEncodingDim];
  for (int k = 0; k < out.dim; ++k) frac[k] = x_level[k] - double(cell[k]);
  CornerTerms terms;
  corner_terms(out.dim, frac, terms);
  out.w = terms.w;
  out.dw = terms.dw;
  return out;
}

double smooth_activation(double w) { return 0.5 * (1.0 - std::cos(kPi * w)); }

double smooth_backward_scale(double w, double lambda) {
  return 1.0 + lambda * 0.5 * kPi * std::sin(kPi * w);
}

SmoothWeights smooth_weights(std::span<const double> w, double lambda) {
  constexpr double kTol = 1e-12;
  SmoothWeights out;
  out.value.reserve(w.size());
  out.backward_scale.reserve(w.size());
  double sum = 0.0;
  for (double wi : w) {
    require(wi >= -kTol && wi <= 1.0 + kTol, "smooth_weights: weight outside [0, 1]");
    sum += wi;
  }
  for (double wi : w) {
    // w + lambda*delta(w) - lambda*detach(delta(w)) is w in value; the
    // renormalization only absorbs rounding drift in the sum.
    out.value.push_back(sum > 0.0 ? wi / sum : wi);
    out.backward_scale.push_back(smooth_backward_scale(wi, lambda));
  }
  return out;
}

HashTables::HashTables(int levels_, std::uint32_t table_size_, int features_)
    : levels(levels_), table_size(table_size_), features(features_),
      values(std::size_t(levels_) * table_size_ * features_, 0.0),
      grads(values.size(), 0.0) {}

void HashTables::init_uniform(std::mt19937_64& rng, double high) {
  std::uniform_real_distribution<double> dist(0.0, high);
  for (double& v : values) v = dist(rng);
}

void HashTables::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

HashEncoding::HashEncoding(EncodingConfig config) : config_(std::move(config)) {
  config_.validate();
  levels_ = resolution_schedule(config_);
  primes_ = config_.effective_primes();
  mask_ = std::uint64_t(config_.table_size) - 1;
}

HashTables HashEncoding::make_tables() const {
  return HashTables(config_.levels, config_.table_size, config_.features);
}

void HashEncoding::fill_level(int level0, std::span<const double> x, std::uint8_t clamped,
                              WeightMode mode, LevelContext& ctx) const {
  const int dim = config_.dim;
  const int corners = 1 << dim;
  const LevelSpec& spec = levels_[level0];
  const int n = spec.resolution;
  ctx.clamped_axes = clamped;
  for (int k = 0; k < dim; ++k) {
    const double xl = x[k] * double(n);
    // Faces belong to the cell above them; x = 1 falls back into the last cell.
    const int cell = std::min(int(std::floor(xl)), n - 1);
    ctx.cell[k] = cell;
    ctx.frac[k] = xl - double(cell);
  }
  for (int i = 0; i < corners; ++i) {
    std::uint64_t index = 0;
    if (spec.dense) {
      for (int k = 0; k < dim; ++k) {
        index = index * (std::uint64_t(n) + 1) + std::uint64_t(ctx.cell[k] + ((i >> k) & 1));
      }
    } else {
      for (int k = 0; k < dim; ++k) {
        index ^= std::uint64_t(ctx.cell[k] + ((i >> k) & 1)) * primes_[k];
      }
      index &= mask_;
    }
    ctx.index[i] = std::uint32_t(index);
  }
  CornerTerms terms;
  corner_terms(dim, ctx.frac.data(), terms);
  double sum = 0.0;
  for (int i = 0; i < corners; ++i) {
    ctx.weight[i] = terms.w[i];
    switch (mode) {
      case WeightMode::kLinear: ctx.forward_weight[i] = terms.w[i]; break;
      case WeightMode::kStraightThrough: ctx.forward_weight[i] = terms.w[i]; break;
      case WeightMode::kSmooth: ctx.forward_weight[i] = smooth_activation(terms.w[i]); break;
    }
    sum += ctx.forward_weight[i];
  }
  if (mode != WeightMode::kLinear) {
    for (int i = 0; i < corners; ++i) ctx.forward_weight[i] /= sum;
  }
}

bool HashEncoding::encode(std::span<const double> x, const HashTables& tables, WeightMode mode,
                          std::span<double> y, std::span<LevelContext> context) const {
  const int dim = config_.dim;
  const int features = config_.features;
  require(int(x.size()) == dim, "encode: input dimension mismatch");
  require(int(y.size()) == output_dim(), "encode: output size mismatch");
  require(int(context.size()) == config_.levels, "encode: context size mismatch");
  require(tables.levels == config_.levels && tables.table_size == config_.table_size &&
              tables.features == features,
          "encode: table shape mismatch");

  double xc[kMaxEncodingDim];
  std::uint8_t clamped = 0;
  for (int k = 0; k < dim; ++k) {
    const double v = std::isnan(x[k]) ? 0.0 : x[k];
    xc[k] = std::clamp(v, 0.0, 1.0);
    if (xc[k] != x[k]) clamped |= std::uint8_t(1u << k);
  }
  const std::span<const double> xs(xc, std::size_t(dim));
  const int corners = 1 << dim;
  for (int l = 0; l < config_.levels; ++l) {
    LevelContext& ctx = context[l];
    fill_level(l, xs, clamped, mode, ctx);
    double* out = y.data() + std::size_t(l) * features;
    std::fill(out, out + features, 0.0);
    for (int i = 0; i < corners; ++i) {
      const double* h = tables.entry(l, ctx.index[i]);
      const double w = ctx.forward_weight[i];
      for (int f = 0; f < features; ++f) out[f] += w * h[f];
    }
  }
  return clamped != 0;
}

EncodingOutput HashEncoding::encode(std::span<const double> x, const HashTables& tables,
                                    WeightMode mode) const {
  EncodingOutput out;
  out.y.assign(output_dim(), 0.0);
  out.context.resize(config_.levels);
  encode(x, tables, mode, out.y, out.context);
  return out;
}

void HashEncoding::backward(std::span<const double> dl_dy, std::span<const LevelContext> context,
                            const HashTables& tables, WeightMode mode,
                            std::span<double> table_grads, std::span<double> dx) const {
  const int dim = config_.dim;
  const int features = config_.features;
  const int corners = 1 << dim;
  require(int(dl_dy.size()) == output_dim(), "encode_backward: gradient size mismatch");
  require(int(context.size()) == config_.levels, "encode_backward: context shape mismatch");
  require(table_grads.size() == tables.values.size(), "encode_backward: table gradient size mismatch");
  require(int(dx.size()) == dim, "encode_backward: dx size mismatch");

  std::fill(dx.begin(), dx.end(), 0.0);
  const double lambda = config_.lambda;
  for (int l = 0; l < config_.levels; ++l) {
    const LevelContext& ctx = context[l];
    const double* g = dl_dy.data() + std::size_t(l) * features;
    bool any = false;
    for (int f = 0; f < features; ++f) any |= g[f] != 0.0;
    if (!any) continue;

    double dl_dweight[kMaxCorners];
    for (int i = 0; i < corners; ++i) {
      const std::size_t offset = l * tables.level_stride() + std::size_t(ctx.index[i]) * features;
      const double* h = tables.values.data() + offset;
      double* gh = table_grads.data() + offset;
      double a = 0.0;
      for (int f = 0; f < features; ++f) {
        gh[f] += g[f] * ctx.forward_weight[i];
        a += g[f] * h[f];
      }
      dl_dweight[i] = a;
    }

    switch (mode) {
      case WeightMode::kLinear: break;
      case WeightMode::kStraightThrough:
        for (int i = 0; i < corners; ++i) dl_dweight[i] *= smooth_backward_scale(ctx.weight[i], lambda);
        break;
      case WeightMode::kSmooth: {
        double sum_delta = 0.0;
        double mean = 0.0;
        for (int i = 0; i < corners; ++i) {
          sum_delta += smooth_activation(ctx.weight[i]);
          mean += dl_dweight[i] * ctx.forward_weight[i];
        }
        for (int i = 0; i < corners; ++i) {
          const double dl_ddelta = (dl_dweight[i] - mean) / sum_delta;
          dl_dweight[i] = dl_ddelta * 0.5 * kPi * std::sin(kPi * ctx.weight[i]);
        }
        break;
      }
    }

    CornerTerms terms;
    corner_terms(dim, ctx.frac.data(), terms);
    const double scale = double(levels_[l].resolution);
    for (int k = 0; k < dim; ++k) {
      double acc = 0.0;
      for (int i = 0; i < corners; ++i) acc += dl_dweight[i] * terms.dw[i][k];
      dx[k] += scale * acc;
    }
  }
  const std::uint8_t clamped = context.empty() ? 0 : context[0].clamped_axes;
  for (int k = 0; k < dim; ++k) {
    if (clamped & (1u << k)) dx[k] = 0.0;
  }
}

std::vector<double> HashEncoding::input_jacobian(std::span<const double> x, const HashTables& tables,
                                                 JacobianMode mode) const {
  const int dim = config_.dim;
  const int features = config_.features;
  const int corners = 1 << dim;
  require(int(x.size()) == dim, "input_jacobian: input dimension mismatch");
  for (int k = 0; k < dim; ++k) {
    require(x[k] >= 0.0 && x[k] <= 1.0, "input_jacobian: x outside the unit cube");
  }
  std::vector<double> jac(std::size_t(output_dim()) * dim, 0.0);
  for (int l = 0; l < config_.levels; ++l) {
    LevelContext ctx;
    fill_level(l, x, 0, WeightMode::kLinear, ctx);
    for (int k = 0; k < dim; ++k) {
      require(ctx.frac[k] > 0.0 && ctx.frac[k] < 1.0,
              "input_jacobian: x lies on a cell face; the Jacobian is undefined there");
    }
    CornerTerms terms;
    corner_terms(dim, ctx.frac.data(), terms);
    const double n = double(levels_[l].resolution);
    for (int i = 0; i < corners; ++i) {
      const double s = mode == JacobianMode::kRaw ? 1.0 : smooth_backward_scale(terms.w[i], config_.lambda);
      const double* h = tables.entry(l, ctx.index[i]);
      for (int f = 0; f < features; ++f) {
        double* row = jac.data() + (std::size_t(l) * features + f) * dim;
        for (int k = 0; k < dim; ++k) row[k] += n * h[f] * s * terms.dw[i][k];
      }
    }
  }
  return jac;
}

std::vector<ProfileRow> derivative_profile_1d(std::span<const double> table, int resolution,
                                              int n_samples, JacobianMode mode, double lambda) {
  require(resolution >= 1, "derivative_profile_1d: resolution must be >= 1");
  require(n_samples >= 1, "derivative_profile_1d: n_samples must be >= 1");
  require(int(table.size()) == resolution + 1,
          "derivative_profile_1d: table needs one entry per vertex (resolution + 1)");
  EncodingConfig config;
  config.levels = 1;
  config.features = 1;
  config.dim = 1;
  config.n_min = resolution;
  config.n_max = resolution;
  config.lambda = lambda;
  config.table_size = std::bit_ceil(std::uint32_t(resolution + 1));
  const HashEncoding encoding(config);
  HashTables tables = encoding.make_tables();
  std::copy(table.begin(), table.end(), tables.values.begin());

  const WeightMode weight_mode = mode == JacobianMode::kRaw ? WeightMode::kLinear : WeightMode::kStraightThrough;
  std::vector<ProfileRow> rows;
  rows.reserve(n_samples);
  const double one = 1.0;
  for (int s = 0; s < n_samples; ++s) {
    const double x = (double(s) + 0.5) / double(n_samples);
    double y = 0.0;
    LevelContext ctx;
    encoding.encode(std::span<const double>(&x, 1), tables, weight_mode, std::span<double>(&y, 1),
                    std::span<LevelContext>(&ctx, 1));
    double dx = 0.0;
    encoding.backward(std::span<const double>(&one, 1), std::span<const LevelContext>(&ctx, 1),
                      tables, weight_mode, tables.grads, std::span<double>(&dx, 1));
    rows.push_back({x, y, dx});
  }
  return rows;
}

void write_profile_csv(std::ostream& out, std::span<const ProfileRow> rows, JacobianMode mode,
                       bool header) {
  if (header) out << "x,h,dh_dx,mode\n";
  const std::string name = mode_name(mode);
  char buf[128];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,", row.x, row.h, row.dh_dx);
    out << buf << name << '\n';
  }
}

}  // namespace hashpose
