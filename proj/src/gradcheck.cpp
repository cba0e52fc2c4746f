#include "hashpose/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hashpose/decoder.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/pose.hpp"
#include "hashpose/renderer.hpp"

namespace hashpose {
namespace {

constexpr double kFaceMargin = 2e-3;  // in cell widths
constexpr double kKinkMargin = 1e-4;

// True when x sits at least `margin` cell widths from every face at every level.
bool interior_point(const HashEncoding& enc, std::span<const double> x, double margin = kFaceMargin) {
  for (const LevelSpec& level : enc.levels()) {
    for (double xk : x) {
      const double s = xk * level.resolution;
      const double frac = s - std::floor(s);
      if (frac < margin || frac > 1.0 - margin) return false;
    }
  }
  return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

GradcheckResult result(const std::string& family, std::span<const double> analytic,
                       std::span<const double> numeric, double tolerance) {
  return {family, max_relative_error(analytic, numeric), int(analytic.size()), tolerance};
}

// Fourth-order central difference of f around 0.
template <typename F>
double five_point(F&& f, double h) {
  return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
}

void fill_uniform(std::span<double> v, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& x : v) x = dist(rng);
}

}  // namespace

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  require(analytic.size() == numeric.size(), "max_relative_error: size mismatch");
  double scale = 0.0;
  for (double n : numeric) scale = std::max(scale, std::abs(n));
  const double floor = std::max(1e-6 * scale, 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

std::vector<GradcheckResult> gradcheck_encoding(std::uint64_t seed, int points) {
  EncodingConfig cfg;
  cfg.levels = 8;
  cfg.table_size = 1u << 12;
  cfg.n_min = 4;
  cfg.n_max = 64;
  const HashEncoding enc(cfg);
  std::mt19937_64 rng(seed);
  HashTables tables = enc.make_tables();
  fill_uniform(tables.values, rng, -1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Stays inside the cell: 2h is below the face margin at the finest level.
  const double h = 1e-5;

  std::vector<GradcheckResult> out;
  for (WeightMode mode : {WeightMode::kLinear, WeightMode::kSmooth}) {
    std::vector<double> analytic, numeric;
    for (int p = 0; p < points;) {
      double x[3] = {unit(rng), unit(rng), unit(rng)};
      if (!interior_point(enc, x)) continue;
      ++p;
      std::vector<double> c(enc.output_dim());
      fill_uniform(c, rng, -1.0, 1.0);
      const EncodingOutput fwd = enc.encode(x, tables, mode);
      std::vector<double> grads(tables.size()), dx(3);
      enc.backward(c, fwd.context, tables, mode, grads, dx);
      for (int k = 0; k < 3; ++k) {
        auto loss = [&](double dk) {
          double xs[3] = {x[0], x[1], x[2]};
          xs[k] += dk;
          return dot(c, enc.encode(xs, tables, mode).y);
        };
        analytic.push_back(dx[k]);
        numeric.push_back(five_point(loss, h));
      }
    }
    out.push_back(result(mode == WeightMode::kLinear ? "encoding.dx" : "encoding.dx(smooth)", analytic, numeric,
                         1e-6));
  }

  // Table gradient: the loss is linear in the touched entries.
  {
    std::vector<double> analytic, numeric;
    for (int p = 0; p < 20;) {
      double x[3] = {unit(rng), unit(rng), unit(rng)};
      if (!interior_point(enc, x)) continue;
      ++p;
      std::vector<double> c(enc.output_dim());
      fill_uniform(c, rng, -1.0, 1.0);
      const EncodingOutput fwd = enc.encode(x, tables, WeightMode::kLinear);
      std::vector<double> grads(tables.size(), 0.0), dx(3);
      enc.backward(c, fwd.context, tables, WeightMode::kLinear, grads, dx);
      for (int l = 0; l < cfg.levels; ++l) {
        const std::size_t idx = l * tables.level_stride() + std::size_t(fwd.context[l].index[0]) * tables.features;
        const double saved = tables.values[idx];
        tables.values[idx] = saved + 1e-4;
        const double lp = dot(c, enc.encode(x, tables, WeightMode::kLinear).y);
        tables.values[idx] = saved - 1e-4;
        const double lm = dot(c, enc.encode(x, tables, WeightMode::kLinear).y);
        tables.values[idx] = saved;
        analytic.push_back(grads[idx]);
        numeric.push_back((lp - lm) / 2e-4);
      }
    }
    out.push_back(result("encoding.dtheta", analytic, numeric, 1e-6));
  }
  return out;
}

std::vector<GradcheckResult> gradcheck_decoder(std::uint64_t seed) {
  DecoderConfig cfg;
  cfg.depth = 2;
  cfg.width = 24;
  cfg.view_enc_levels = 2;
  const int input_dim = 10;
  std::mt19937_64 rng(seed);
  DecoderParams params(cfg, input_dim);
  params.init_he_uniform(rng);
  fill_uniform(params.values, rng, -0.5, 0.5);
  params.mark_updated();

  std::vector<double> y(input_dim), dir(params.dir_dim());
  for (int attempt = 0;; ++attempt) {
    require(attempt < 1000, "gradcheck_decoder: no probe away from ReLU kinks");
    fill_uniform(y, rng, -1.0, 1.0);
    Vec3 d(std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng),
           std::normal_distribution<double>()(rng));
    sinusoidal_encode(d.normalized(), cfg.view_enc_levels, dir);
    if (min_relu_margin(y, dir, params) >= 1e-3) break;
  }
  const double a = std::uniform_real_distribution<double>(-1, 1)(rng);
  const std::array<double, 3> b{std::uniform_real_distribution<double>(-1, 1)(rng),
                                std::uniform_real_distribution<double>(-1, 1)(rng),
                                std::uniform_real_distribution<double>(-1, 1)(rng)};
  auto loss = [&]() {
    DecoderTape tape;
    const DecoderOutput o = decoder_forward(y, dir, params, tape);
    return a * o.sigma + b[0] * o.rgb[0] + b[1] * o.rgb[1] + b[2] * o.rgb[2];
  };

  DecoderTape tape;
  decoder_forward(y, dir, params, tape);
  std::vector<double> dphi(params.size(), 0.0), dy(input_dim), ddir(params.dir_dim());
  decoder_backward(a, b, tape, params, dphi, dy, ddir);

  const double h = 5e-5;
  auto central = [&](double& v) {
    const double saved = v;
    const double g = five_point(
        [&](double dv) {
          v = saved + dv;
          params.mark_updated();
          return loss();
        },
        h);
    v = saved;
    params.mark_updated();
    return g;
  };
  std::vector<double> n_phi(params.size()), n_y(input_dim), n_dir(params.dir_dim());
  for (std::size_t i = 0; i < params.size(); ++i) n_phi[i] = central(params.values[i]);
  for (int i = 0; i < input_dim; ++i) n_y[i] = central(y[i]);
  for (int i = 0; i < params.dir_dim(); ++i) n_dir[i] = central(dir[i]);
  return {result("decoder.dphi", dphi, n_phi, 1e-5), result("decoder.dy", dy, n_y, 1e-5),
          result("decoder.ddir", ddir, n_dir, 1e-5)};
}

std::vector<GradcheckResult> gradcheck_pose(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Intrinsics K{40.0, 16.0, 16.0, 32, 32};
  std::vector<double> a_origin, n_origin, a_dir, n_dir, a_point, n_point;
  const double h = 1e-3;
  for (int trial = 0; trial < 20; ++trial) {
    Vec6 psi;
    for (int k = 0; k < 6; ++k) psi[k] = normal(rng);
    psi.head<3>() *= 0.8;
    const double u = std::uniform_real_distribution<double>(0, 32)(rng);
    const double v = std::uniform_real_distribution<double>(0, 32)(rng);
    RayJacobian J;
    generate_ray(u, v, K, pose_derivatives(Twist::from_vector(psi)), J);
    auto point = [&](const Pose& p) {
      const Vec3 q((u - K.cx) / K.focal, (v - K.cy) / K.focal, -1.0);
      return Vec3(p.R * q + p.t);
    };
    for (int k = 0; k < 6; ++k) {
      // Origin, direction and camera-space point at psi + s e_k, stacked.
      auto eval = [&](double s) {
        Vec6 p = psi;
        p[k] += s;
        const Pose P = exp_map(Twist::from_vector(p));
        const Ray ray = generate_ray(u, v, K, P);
        Eigen::Matrix<double, 9, 1> out;
        out << ray.origin, ray.direction, point(P);
        return out;
      };
      const Eigen::Matrix<double, 9, 1> d =
          (eval(-2 * h) - 8 * eval(-h) + 8 * eval(h) - eval(2 * h)) / (12 * h);
      const Vec3 d_origin = d.segment<3>(0), d_dir = d.segment<3>(3), d_point = d.segment<3>(6);
      for (int r = 0; r < 3; ++r) {
        a_origin.push_back(J.origin(r, k));
        n_origin.push_back(d_origin[r]);
        a_dir.push_back(J.direction(r, k));
        n_dir.push_back(d_dir[r]);
        a_point.push_back(J.point(r, k));
        n_point.push_back(d_point[r]);
      }
    }
  }
  return {result("pose.origin", a_origin, n_origin, 1e-6), result("pose.direction", a_dir, n_dir, 1e-6),
          result("pose.point", a_point, n_point, 1e-6)};
}

std::vector<GradcheckResult> gradcheck_render(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EncodingConfig ecfg;
  ecfg.levels = 4;
  ecfg.table_size = 1u << 10;
  ecfg.n_min = 2;
  ecfg.n_max = 16;
  const HashEncoding enc(ecfg);
  HashTables tables = enc.make_tables();
  fill_uniform(tables.values, rng, -1.0, 1.0);
  DecoderConfig dcfg;
  dcfg.depth = 2;
  dcfg.width = 16;
  dcfg.view_enc_levels = 2;
  DecoderParams dec(dcfg, enc.output_dim());
  dec.init_he_uniform(rng);

  // Cameras sit inside a large box so every sample stays inside the unit cube.
  const SceneBounds bounds{Vec3::Constant(-3.0), Vec3::Constant(3.0)};
  const Field field{&enc, &tables, WeightMode::kLinear, &dec, bounds};
  RenderConfig rc;
  rc.n_samples = 16;
  rc.t_near = 0.2;
  rc.t_far = 1.6;
  rc.stratified = false;
  const Intrinsics K{20.0, 8.0, 8.0, 16, 16};
  std::normal_distribution<double> normal(0.0, 1.0);
  struct Pixel {
    int camera;
    double u, v;
    std::array<double, 3> target;
  };
  std::vector<Twist> twists(2);
  std::vector<Pixel> pixels;
  std::uniform_real_distribution<double> px(0.0, 16.0), col(0.0, 1.0);
  std::mt19937_64 unused(0);
  const std::vector<double> depths = sample_depths(rc, unused);

  // Redraw cameras and pixels until no sample sits near a cell face or a
  // ReLU kink, where finite differences stop measuring the derivative.
  auto smooth_scene = [&] {
    std::vector<double> dir_enc;
    for (const Pixel& p : pixels) {
      const Ray ray = generate_ray(p.u, p.v, K, exp_map(twists[p.camera]));
      dir_enc = sinusoidal_encode(ray.direction, dcfg.view_enc_levels);
      for (double t : depths) {
        const Vec3 x = bounds.to_unit(ray.origin + t * ray.direction);
        const std::span<const double> xs(x.data(), 3);
        if (!inside_unit_cube(x) || !interior_point(enc, xs, kKinkMargin)) return false;
        const std::vector<double> y = enc.encode(xs, tables, field.mode).y;
        if (min_relu_margin(y, dir_enc, dec) < kKinkMargin) return false;
      }
    }
    return true;
  };
  for (int attempt = 0;; ++attempt) {
    require(attempt < 1000, "gradcheck_render: no kink-free scene found");
    for (Twist& t : twists) {
      for (int k = 0; k < 3; ++k) {
        t.omega[k] = 0.5 * normal(rng);
        t.v[k] = 0.3 * normal(rng);
      }
    }
    pixels.clear();
    for (int r = 0; r < 4; ++r) pixels.push_back({r % 2, px(rng), px(rng), {col(rng), col(rng), col(rng)}});
    if (smooth_scene()) break;
  }

  auto make_batch = [&](const std::vector<Twist>& ts, bool with_jacobians) {
    RayBatch b;
    for (const Pixel& p : pixels) {
      const PoseDerivatives d = pose_derivatives(ts[p.camera]);
      RayJacobian J;
      b.rays.push_back(generate_ray(p.u, p.v, K, d, J));
      b.targets.push_back(p.target);
      if (with_jacobians) b.jacobians.push_back(J);
      b.cameras.push_back(p.camera);
    }
    return b;
  };
  auto loss_at = [&](const std::vector<Twist>& ts) {
    return render_batch(make_batch(ts, false), field, rc, unused, nullptr).loss;
  };

  const RayBatch batch = make_batch(twists, true);
  RenderTape tape;
  const BatchResult res = render_batch(batch, field, rc, unused, &tape);
  std::vector<double> g_tables(tables.size(), 0.0), g_dec(dec.size(), 0.0);
  std::vector<Vec6> g_pose(twists.size(), Vec6::Zero());
  render_backward(tape, batch, res, field, {g_tables, g_dec, &g_pose});

  std::vector<GradcheckResult> out;
  {
    const double h = 1e-7;
    std::vector<double> analytic, numeric;
    for (std::size_t c = 0; c < twists.size(); ++c) {
      for (int k = 0; k < 6; ++k) {
        std::vector<Twist> tp = twists, tm = twists;
        Vec6 vp = twists[c].vector(), vm = vp;
        vp[k] += h;
        vm[k] -= h;
        tp[c] = Twist::from_vector(vp);
        tm[c] = Twist::from_vector(vm);
        analytic.push_back(g_pose[c][k]);
        numeric.push_back((loss_at(tp) - loss_at(tm)) / (2 * h));
      }
    }
    out.push_back(result("render.dpsi", analytic, numeric, 1e-4));
  }
  // Tables and decoder: directional derivatives along random directions.
  // Individual entries behind nearly opaque samples carry gradients far below
  // the rounding floor of the loss, so per-entry differences only measure noise.
  auto directional = [&](const char* family, std::vector<double>& values, std::span<const double> grad,
                         bool decoder_values) {
    const double h = 1e-7;
    std::vector<double> analytic, numeric;
    const std::vector<double> saved = values;
    // Directions whose derivative is below what the stencil resolves against
    // rounding in the loss are redrawn.
    const double floor = 1e5 * std::numeric_limits<double>::epsilon() * std::abs(res.loss) / h;
    for (int trial = 0; trial < 8; ++trial) {
      std::vector<double> dir(values.size(), 0.0);
      for (int draw = 0; draw < 100; ++draw) {
        for (std::size_t i = 0; i < dir.size(); ++i) {
          if (grad[i] != 0.0 || decoder_values) dir[i] = normal(rng);
        }
        if (std::abs(dot(grad, dir)) >= floor) break;
      }
      numeric.push_back(five_point(
          [&](double s) {
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = saved[i] + s * dir[i];
            if (decoder_values) dec.mark_updated();
            return loss_at(twists);
          },
          h));
      values = saved;
      if (decoder_values) dec.mark_updated();
      analytic.push_back(dot(grad, dir));
    }
    out.push_back(result(family, analytic, numeric, 1e-4));
  };
  directional("render.dtheta", tables.values, g_tables, false);
  directional("render.dphi", dec.values, g_dec, true);
  return out;
}

std::vector<GradcheckResult> run_gradcheck(const std::string& module, std::uint64_t seed) {
  require(module == "all" || module == "encoding" || module == "decoder" || module == "pose" || module == "render",
          "gradcheck: module must be all, encoding, decoder, pose or render");
  std::vector<GradcheckResult> out;
  auto add = [&](std::vector<GradcheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  if (module == "all" || module == "encoding") add(gradcheck_encoding(seed));
  if (module == "all" || module == "decoder") add(gradcheck_decoder(seed));
  if (module == "all" || module == "pose") add(gradcheck_pose(seed));
  if (module == "all" || module == "render") add(gradcheck_render(seed));
  return out;
}

}  // namespace hashpose
