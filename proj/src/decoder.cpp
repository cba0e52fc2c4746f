#include "hashpose/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hashpose/simd/kernels.hpp"

namespace hashpose {
namespace {

// Offsets into DecoderTape::buffer.
struct TapeLayout {
  std::size_t input = 0;
  std::size_t trunk = 0;  // depth blocks of `width`
  std::size_t feature = 0;
  std::size_t concat = 0;  // feature ++ dir_enc
  std::size_t hidden = 0;
  std::size_t rgb = 0;
  std::size_t total = 0;
};

TapeLayout tape_layout(const DecoderParams& p) {
  const int w = p.config().width;
  TapeLayout t;
  t.input = 0;
  t.trunk = t.input + p.input_dim();
  t.feature = t.trunk + std::size_t(p.config().depth) * w;
  t.concat = t.feature + w;
  t.hidden = t.concat + w + p.dir_dim();
  t.rgb = t.hidden + w;
  t.total = t.rgb + 3;
  return t;
}

inline void relu_inplace(double* x, int n) {
  for (int i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_mask(const double* activation, double* grad, int n) {
  for (int i = 0; i < n; ++i) {
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
  }
}

}  // namespace

void DecoderConfig::validate() const {
  require(depth >= 1, "decoder: depth must be >= 1");
  require(width >= 1, "decoder: width must be >= 1");
  require(view_enc_levels >= 1, "decoder: view_enc_levels must be >= 1");
}

void sinusoidal_encode(const Vec3& dir, int levels, std::span<double> out) {
  require(levels >= 1, "sinusoidal_encode: levels must be >= 1");
  require(int(out.size()) == sinusoidal_dim(levels), "sinusoidal_encode: output size mismatch");
  std::size_t j = 0;
  for (int l = 0; l < levels; ++l) {
    const double freq = std::ldexp(std::numbers::pi, l);
    for (int k = 0; k < 3; ++k) {
      out[j++] = std::cos(freq * dir[k]);
      out[j++] = std::sin(freq * dir[k]);
    }
  }
}

std::vector<double> sinusoidal_encode(const Vec3& dir, int levels) {
  std::vector<double> out(sinusoidal_dim(levels));
  sinusoidal_encode(dir, levels, out);
  return out;
}

Vec3 sinusoidal_backward(const Vec3& dir, int levels, std::span<const double> dl_denc) {
  require(int(dl_denc.size()) == sinusoidal_dim(levels), "sinusoidal_backward: size mismatch");
  Vec3 g = Vec3::Zero();
  std::size_t j = 0;
  for (int l = 0; l < levels; ++l) {
    const double freq = std::ldexp(std::numbers::pi, l);
    for (int k = 0; k < 3; ++k) {
      const double arg = freq * dir[k];
      g[k] += -freq * std::sin(arg) * dl_denc[j++];
      g[k] += freq * std::cos(arg) * dl_denc[j++];
    }
  }
  return g;
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DecoderParams::DecoderParams(DecoderConfig config, int input_dim) : config_(config), input_dim_(input_dim) {
  config_.validate();
  require(input_dim >= 1, "decoder: input_dim must be >= 1");
  std::size_t offset = 0;
  auto add = [&](int in, int out) {
    DenseLayer layer{in, out, offset, offset + std::size_t(in) * out};
    offset = layer.bias_offset + out;
    layers_.push_back(layer);
  };
  const int w = config_.width;
  for (int k = 0; k < config_.depth; ++k) add(k == 0 ? input_dim : w, w);
  add(w, 1);                       // density
  add(w, w);                       // feature
  add(w + dir_dim(), w);           // color hidden
  add(w, 3);                       // color out
  values.assign(offset, 0.0);
  grads.assign(offset, 0.0);
}

void DecoderParams::init_he_uniform(std::mt19937_64& rng) {
  for (const DenseLayer& layer : layers_) {
    const double bound = std::sqrt(6.0 / double(layer.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < std::size_t(layer.in) * layer.out; ++i) values[layer.weight_offset + i] = dist(rng);
    std::fill_n(values.begin() + layer.bias_offset, layer.out, 0.0);
  }
  mark_updated();
}

void DecoderParams::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

DecoderOutput decoder_forward(std::span<const double> y, std::span<const double> dir_enc,
                              const DecoderParams& params, DecoderTape& tape) {
  require(int(y.size()) == params.input_dim(), "decoder_forward: encoding size mismatch");
  require(int(dir_enc.size()) == params.dir_dim(), "decoder_forward: direction encoding size mismatch");
  const auto& k = simd::kernels();
  const TapeLayout layout = tape_layout(params);
  tape.buffer.resize(layout.total);
  tape.version = params.version;
  double* buf = tape.buffer.data();
  const double* phi = params.values.data();
  const int w = params.config().width;

  std::copy(y.begin(), y.end(), buf + layout.input);
  const double* in = buf + layout.input;
  for (int d = 0; d < params.config().depth; ++d) {
    const DenseLayer& layer = params.trunk(d);
    double* out = buf + layout.trunk + std::size_t(d) * w;
    k.dense_forward(layer.in, layer.out, phi + layer.weight_offset, phi + layer.bias_offset, in, out);
    relu_inplace(out, w);
    in = out;
  }
  const double* trunk_out = in;

  DecoderOutput result;
  const DenseLayer& dens = params.density_head();
  k.dense_forward(dens.in, 1, phi + dens.weight_offset, phi + dens.bias_offset, trunk_out, &tape.density_preact);
  result.sigma = softplus(tape.density_preact);

  const DenseLayer& feat = params.feature_head();
  double* feature = buf + layout.concat;
  k.dense_forward(feat.in, feat.out, phi + feat.weight_offset, phi + feat.bias_offset, trunk_out, feature);
  std::copy(feature, feature + w, buf + layout.feature);
  std::copy(dir_enc.begin(), dir_enc.end(), buf + layout.concat + w);

  const DenseLayer& hid = params.color_hidden();
  double* hidden = buf + layout.hidden;
  k.dense_forward(hid.in, hid.out, phi + hid.weight_offset, phi + hid.bias_offset, buf + layout.concat, hidden);
  relu_inplace(hidden, w);

  const DenseLayer& col = params.color_out();
  double* rgb = buf + layout.rgb;
  k.dense_forward(col.in, 3, phi + col.weight_offset, phi + col.bias_offset, hidden, rgb);
  for (int c = 0; c < 3; ++c) {
    rgb[c] = sigmoid(rgb[c]);
    result.rgb[c] = rgb[c];
  }
  return result;
}

void decoder_backward(double dl_dsigma, const std::array<double, 3>& dl_drgb, const DecoderTape& tape,
                      const DecoderParams& params, std::span<double> param_grads,
                      std::span<double> dl_dy, std::span<double> dl_ddir) {
  if (tape.version != params.version) throw ValidationError("decoder_backward: stale tape");
  require(param_grads.size() == params.size(), "decoder_backward: gradient size mismatch");
  require(int(dl_dy.size()) == params.input_dim(), "decoder_backward: dl_dy size mismatch");
  require(int(dl_ddir.size()) == params.dir_dim(), "decoder_backward: dl_ddir size mismatch");
  const TapeLayout layout = tape_layout(params);
  require(tape.buffer.size() == layout.total, "decoder_backward: tape shape mismatch");

  const auto& k = simd::kernels();
  const double* buf = tape.buffer.data();
  const double* phi = params.values.data();
  double* g = param_grads.data();
  const int w = params.config().width;
  const int depth = params.config().depth;

  thread_local std::vector<double> scratch;
  scratch.resize(std::size_t(4) * (w + params.dir_dim()) + params.input_dim() + 8);
  double* d_rgb = scratch.data();
  double* d_hidden = d_rgb + 3;
  double* d_concat = d_hidden + w;
  double* d_trunk = d_concat + w + params.dir_dim();
  double* d_tmp = d_trunk + w;
  double* d_input = d_tmp + w;

  const double* rgb = buf + layout.rgb;
  for (int c = 0; c < 3; ++c) d_rgb[c] = dl_drgb[c] * rgb[c] * (1.0 - rgb[c]);

  const DenseLayer& col = params.color_out();
  k.dense_accumulate(col.in, 3, buf + layout.hidden, d_rgb, g + col.weight_offset, g + col.bias_offset);
  k.dense_backward_input(col.in, 3, phi + col.weight_offset, d_rgb, d_hidden);
  relu_mask(buf + layout.hidden, d_hidden, w);

  const DenseLayer& hid = params.color_hidden();
  k.dense_accumulate(hid.in, hid.out, buf + layout.concat, d_hidden, g + hid.weight_offset, g + hid.bias_offset);
  k.dense_backward_input(hid.in, hid.out, phi + hid.weight_offset, d_hidden, d_concat);
  std::copy(d_concat + w, d_concat + w + params.dir_dim(), dl_ddir.begin());

  const double* trunk_out = buf + layout.trunk + std::size_t(depth - 1) * w;
  const DenseLayer& feat = params.feature_head();
  k.dense_accumulate(feat.in, feat.out, trunk_out, d_concat, g + feat.weight_offset, g + feat.bias_offset);
  k.dense_backward_input(feat.in, feat.out, phi + feat.weight_offset, d_concat, d_trunk);

  const double d_density = dl_dsigma * sigmoid(tape.density_preact);
  const DenseLayer& dens = params.density_head();
  k.dense_accumulate(dens.in, 1, trunk_out, &d_density, g + dens.weight_offset, g + dens.bias_offset);
  k.axpy(w, d_density, phi + dens.weight_offset, d_trunk);

  for (int d = depth - 1; d >= 0; --d) {
    const DenseLayer& layer = params.trunk(d);
    const double* activation = buf + layout.trunk + std::size_t(d) * w;
    relu_mask(activation, d_trunk, w);
    const double* input = d == 0 ? buf + layout.input : buf + layout.trunk + std::size_t(d - 1) * w;
    k.dense_accumulate(layer.in, layer.out, input, d_trunk, g + layer.weight_offset, g + layer.bias_offset);
    double* target = d == 0 ? d_input : d_tmp;
    k.dense_backward_input(layer.in, layer.out, phi + layer.weight_offset, d_trunk, target);
    if (d > 0) std::copy(d_tmp, d_tmp + w, d_trunk);
  }
  std::copy(d_input, d_input + params.input_dim(), dl_dy.begin());
}

double min_relu_margin(std::span<const double> y, std::span<const double> dir_enc, const DecoderParams& params) {
  require(int(y.size()) == params.input_dim() && int(dir_enc.size()) == params.dir_dim(),
          "min_relu_margin: input size mismatch");
  const auto& k = simd::kernels();
  const double* phi = params.values.data();
  const int w = params.config().width;
  std::vector<double> in(y.begin(), y.end()), pre(w);
  double margin = std::numeric_limits<double>::infinity();
  auto relu_layer = [&](const DenseLayer& layer) {
    k.dense_forward(layer.in, layer.out, phi + layer.weight_offset, phi + layer.bias_offset, in.data(), pre.data());
    for (int i = 0; i < w; ++i) margin = std::min(margin, std::abs(pre[i]));
    relu_inplace(pre.data(), w);
  };
  for (int d = 0; d < params.config().depth; ++d) {
    relu_layer(params.trunk(d));
    in = pre;
  }
  const DenseLayer& feat = params.feature_head();
  std::vector<double> concat(w + params.dir_dim());
  k.dense_forward(feat.in, feat.out, phi + feat.weight_offset, phi + feat.bias_offset, in.data(), concat.data());
  std::copy(dir_enc.begin(), dir_enc.end(), concat.begin() + w);
  in = concat;
  relu_layer(params.color_hidden());
  return margin;
}

}  // namespace hashpose
