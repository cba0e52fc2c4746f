#include "hashpose/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

namespace hashpose {
namespace {

// Splits [0, n) into `threads` contiguous chunks and runs them in parallel.
// Chunk k always covers the same indices, so per-worker results can be
// reduced in a fixed order.
void parallel_chunks(std::size_t n, int threads, const std::function<void(int, std::size_t, std::size_t)>& body) {
  const int workers = std::max(1, std::min<int>(threads, int(n)));
  if (workers <= 1) {
    body(0, 0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back(body, w, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void RenderConfig::validate() const {
  require(n_samples >= 2, "render: n_samples must be >= 2");
  require(std::isfinite(t_near) && std::isfinite(t_far) && t_near < t_far, "render: need t_near < t_far");
  require(t_near >= 0.0, "render: t_near must be >= 0");
}

SceneBounds SceneBounds::with_margin(const Vec3& lo, const Vec3& hi, double margin) {
  require((hi.array() > lo.array()).all(), "scene bounds: hi must exceed lo on every axis");
  require(margin >= 0.0, "scene bounds: margin must be >= 0");
  const Vec3 pad = margin * (hi - lo);
  return {lo - pad, hi + pad};
}

std::vector<double> sample_depths(const RenderConfig& config, std::mt19937_64& rng) {
  const int n = config.n_samples;
  const double bin = (config.t_far - config.t_near) / n;
  std::vector<double> t(n);
  if (!config.stratified) {
    for (int i = 0; i < n; ++i) t[i] = config.t_near + (i + 0.5) * bin;
    return t;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) t[i] = config.t_near + (i + unit(rng)) * bin;
  return t;
}

CompositeResult composite(std::span<const double> sigmas, std::span<const double> rgbs,
                          std::span<const double> depths, double background) {
  const std::size_t n = sigmas.size();
  require(depths.size() == n && rgbs.size() == 3 * n, "composite: array length mismatch");
  CompositeResult out;
  out.alpha.resize(n);
  out.weight.resize(n);
  out.transmittance.resize(n + 1);
  double trans = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = i + 1 < n ? depths[i + 1] - depths[i] : kTerminalInterval;
    const double alpha = -std::expm1(-sigmas[i] * delta);
    out.transmittance[i] = trans;
    out.alpha[i] = alpha;
    out.weight[i] = trans * alpha;
    for (int c = 0; c < 3; ++c) out.color[c] += out.weight[i] * rgbs[3 * i + c];
    trans *= 1.0 - alpha;
  }
  out.transmittance[n] = trans;
  for (int c = 0; c < 3; ++c) out.color[c] += trans * background;
  return out;
}

void composite_backward(const CompositeResult& forward, std::span<const double> rgbs,
                        std::span<const double> depths, double background,
                        const std::array<double, 3>& dl_dcolor, std::span<double> dl_dsigma,
                        std::span<double> dl_drgb) {
  const std::size_t n = forward.alpha.size();
  require(dl_dsigma.size() == n && dl_drgb.size() == 3 * n, "composite_backward: size mismatch");
  // behind = sum_{j>i} w_j c_j + T_{n+1} bg, projected on dL/dC.
  double behind = forward.transmittance[n] * background * (dl_dcolor[0] + dl_dcolor[1] + dl_dcolor[2]);
  for (std::size_t i = n; i-- > 0;) {
    const double delta = i + 1 < n ? depths[i + 1] - depths[i] : kTerminalInterval;
    double own = 0.0;
    for (int c = 0; c < 3; ++c) {
      own += rgbs[3 * i + c] * dl_dcolor[c];
      dl_drgb[3 * i + c] = forward.weight[i] * dl_dcolor[c];
    }
    dl_dsigma[i] = delta * (forward.transmittance[i + 1] * own - behind);
    behind += forward.weight[i] * own;
  }
}

std::array<double, 3> render_ray(const Ray& ray, std::span<const double> depths, const Field& field,
                                 double background, RayTape* tape) {
  thread_local RayTape scratch;
  RayTape& rt = tape ? *tape : scratch;
  const HashEncoding& enc = *field.encoding;
  const DecoderParams& dec = *field.decoder;
  const std::size_t n = depths.size();
  const int levels = enc.config().levels;

  rt.depths.assign(depths.begin(), depths.end());
  rt.sigma.assign(n, 0.0);
  rt.rgb.assign(3 * n, 0.0);
  rt.inside.assign(n, 0);
  rt.context.resize(n * levels);
  rt.decoder.resize(n);
  rt.dir_enc.resize(dec.dir_dim());
  sinusoidal_encode(ray.direction, dec.config().view_enc_levels, rt.dir_enc);

  thread_local std::vector<double> y;
  y.resize(enc.output_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = field.bounds.to_unit(ray.origin + depths[i] * ray.direction);
    if (!inside_unit_cube(u)) continue;
    rt.inside[i] = 1;
    enc.encode(std::span<const double>(u.data(), 3), *field.tables, field.mode, y,
               std::span<LevelContext>(rt.context.data() + i * levels, levels));
    const DecoderOutput out = decoder_forward(y, rt.dir_enc, dec, rt.decoder[i]);
    rt.sigma[i] = out.sigma;
    for (int c = 0; c < 3; ++c) rt.rgb[3 * i + c] = out.rgb[c];
  }
  rt.composite = composite(rt.sigma, rt.rgb, rt.depths, background);
  return rt.composite.color;
}

BatchResult render_batch(const RayBatch& batch, const Field& field, const RenderConfig& config,
                         std::mt19937_64& rng, RenderTape* tape, int threads) {
  config.validate();
  const std::size_t n = batch.size();
  require(n > 0, "render_batch: empty batch");
  require(batch.targets.size() == n, "render_batch: target count mismatch");
  require(field.encoding->input_dim() == 3, "render_batch: encoding must be 3-D");

  // Depths are drawn serially so the result does not depend on `threads`.
  std::vector<std::vector<double>> depths(n);
  for (auto& d : depths) d = sample_depths(config, rng);

  const double bg = config.background();
  if (tape) {
    tape->rays.resize(n);
    tape->decoder_version = field.decoder->version;
    tape->table_size = field.tables->size();
    tape->background = bg;
  }
  BatchResult result;
  result.colors.resize(n);
  parallel_chunks(n, threads, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      result.colors[r] = render_ray(batch.rays[r], depths[r], field, bg, tape ? &tape->rays[r] : nullptr);
    }
  });
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double e = result.colors[r][c] - batch.targets[r][c];
      sum += e * e;
    }
  }
  result.loss = sum / double(3 * n);
  if (!std::isfinite(result.loss)) throw DivergenceError("render_batch: non-finite loss");
  return result;
}

void render_backward(const RenderTape& tape, const RayBatch& batch, const BatchResult& result,
                     const Field& field, FieldGradients grads, int threads) {
  const std::size_t n = batch.size();
  if (tape.rays.size() != n || tape.decoder_version != field.decoder->version ||
      tape.table_size != field.tables->size()) {
    throw ValidationError("render_backward: stale tape");
  }
  require(grads.tables.size() == field.tables->size(), "render_backward: table gradient size mismatch");
  require(grads.decoder.size() == field.decoder->size(), "render_backward: decoder gradient size mismatch");
  const bool want_pose = grads.poses != nullptr;
  if (want_pose) {
    require(batch.jacobians.size() == n && batch.cameras.size() == n,
            "render_backward: pose gradients need per-ray Jacobians and camera ids");
  }

  const HashEncoding& enc = *field.encoding;
  const DecoderParams& dec = *field.decoder;
  const int levels = enc.config().levels;
  const Vec3 inv_extent = field.bounds.extent().cwiseInverse();
  const double scale = 2.0 / double(3 * n);

  const int workers = std::max(1, std::min<int>(threads, int(n)));
  std::vector<std::vector<double>> table_buf(workers > 1 ? workers : 0);
  std::vector<std::vector<double>> dec_buf(workers > 1 ? workers : 0);
  std::vector<std::vector<Vec6>> pose_buf(workers);
  const std::size_t n_cameras = want_pose ? grads.poses->size() : 0;

  parallel_chunks(n, workers, [&](int w, std::size_t begin, std::size_t end) {
    std::span<double> g_table = grads.tables;
    std::span<double> g_dec = grads.decoder;
    if (workers > 1) {
      table_buf[w].assign(grads.tables.size(), 0.0);
      dec_buf[w].assign(grads.decoder.size(), 0.0);
      g_table = table_buf[w];
      g_dec = dec_buf[w];
    }
    pose_buf[w].assign(n_cameras, Vec6::Zero());

    std::vector<double> dl_dsigma, dl_drgb, dl_dy(enc.output_dim()), dl_ddir(dec.dir_dim()),
        dir_acc(dec.dir_dim());
    double dx[3];
    for (std::size_t r = begin; r < end; ++r) {
      const RayTape& rt = tape.rays[r];
      const std::size_t ns = rt.depths.size();
      std::array<double, 3> dl_dc;
      for (int c = 0; c < 3; ++c) dl_dc[c] = scale * (result.colors[r][c] - batch.targets[r][c]);
      dl_dsigma.resize(ns);
      dl_drgb.resize(3 * ns);
      composite_backward(rt.composite, rt.rgb, rt.depths, tape.background, dl_dc, dl_dsigma, dl_drgb);

      std::fill(dir_acc.begin(), dir_acc.end(), 0.0);
      Vec6 dpsi = Vec6::Zero();
      const RayJacobian* jac = want_pose ? &batch.jacobians[r] : nullptr;
      for (std::size_t i = 0; i < ns; ++i) {
        if (!rt.inside[i]) continue;
        const std::array<double, 3> drgb{dl_drgb[3 * i], dl_drgb[3 * i + 1], dl_drgb[3 * i + 2]};
        if (dl_dsigma[i] == 0.0 && drgb[0] == 0.0 && drgb[1] == 0.0 && drgb[2] == 0.0) continue;
        decoder_backward(dl_dsigma[i], drgb, rt.decoder[i], dec, g_dec, dl_dy, dl_ddir);
        for (std::size_t k = 0; k < dir_acc.size(); ++k) dir_acc[k] += dl_ddir[k];
        enc.backward(dl_dy, std::span<const LevelContext>(rt.context.data() + i * levels, levels),
                     *field.tables, field.mode, g_table, std::span<double>(dx, 3));
        if (jac) {
          const Vec3 dp = Vec3(dx[0], dx[1], dx[2]).cwiseProduct(inv_extent);
          dpsi.noalias() += (jac->origin + rt.depths[i] * jac->direction).transpose() * dp;
        }
      }
      if (jac) {
        const Vec3 g_dir = sinusoidal_backward(batch.rays[r].direction, dec.config().view_enc_levels, dir_acc);
        dpsi.noalias() += jac->direction.transpose() * g_dir;
        const int cam = batch.cameras[r];
        require(cam >= 0 && std::size_t(cam) < n_cameras, "render_backward: camera index out of range");
        pose_buf[w][cam] += dpsi;
      }
    }
  });

  if (workers > 1) {
    for (int w = 0; w < workers; ++w) {
      for (std::size_t i = 0; i < grads.tables.size(); ++i) grads.tables[i] += table_buf[w][i];
      for (std::size_t i = 0; i < grads.decoder.size(); ++i) grads.decoder[i] += dec_buf[w][i];
    }
  }
  if (want_pose) {
    for (int w = 0; w < workers; ++w) {
      for (std::size_t c = 0; c < n_cameras; ++c) (*grads.poses)[c] += pose_buf[w][c];
    }
  }
}

std::vector<float> render_image(const Intrinsics& intrinsics, const Pose& pose, const Field& field,
                                const RenderConfig& config, int threads) {
  config.validate();
  RenderConfig fixed = config;
  fixed.stratified = false;
  std::mt19937_64 unused(0);
  const std::vector<double> depths = sample_depths(fixed, unused);
  const double bg = config.background();
  std::vector<float> image(std::size_t(intrinsics.width) * intrinsics.height * 3);
  parallel_chunks(std::size_t(intrinsics.height), threads, [&](int, std::size_t begin, std::size_t end) {
    for (std::size_t v = begin; v < end; ++v) {
      for (int u = 0; u < intrinsics.width; ++u) {
        const Ray ray = generate_ray(u + 0.5, v + 0.5, intrinsics, pose);
        const auto c = render_ray(ray, depths, field, bg, nullptr);
        float* px = image.data() + (v * intrinsics.width + u) * 3;
        for (int k = 0; k < 3; ++k) px[k] = float(c[k]);
      }
    }
  });
  return image;
}

}  // namespace hashpose
