// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance <desk-config.json> [--skip-training] [--out DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "hashpose/config.hpp"
#include "hashpose/encoding.hpp"
#include "hashpose/experiment.hpp"
#include "hashpose/gradcheck.hpp"
#include "hashpose/io.hpp"
#include "hashpose/pose.hpp"
#include "hashpose/renderer.hpp"
#include "hashpose/trainer.hpp"

using namespace hashpose;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = budget_s <= 0.0 || secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s  %2d  %-34s %s  [%.2fs%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

using u128 = unsigned __int128;

std::uint32_t brute_hash(const std::uint32_t* corner, const std::vector<std::uint64_t>& primes, std::uint32_t T) {
  u128 h = 0;
  for (std::size_t k = 0; k < primes.size(); ++k) h ^= (u128(corner[k]) * u128(primes[k])) & u128(~std::uint64_t(0));
  return std::uint32_t(std::uint64_t(h % u128(T)));
}

Mat3 axis_angle(const Vec3& w) {
  const double a = w.norm();
  return a == 0.0 ? Mat3::Identity() : Mat3(Eigen::AngleAxisd(a, w / a).toRotationMatrix());
}

Outcome encoding_gradient() {
  double worst = 0.0;
  bool ok = true;
  for (const GradcheckResult& r : gradcheck_encoding(1, 200)) {
    if (r.family == "encoding.dtheta") continue;
    worst = std::max(worst, r.max_rel_err);
    ok &= r.checks == 600 && r.pass() && r.tolerance <= 1e-6;
  }
  return {ok && worst < 1e-6, fmt("max rel err %.3g over 200 points x 3 axes (d-linear and smooth)", worst)};
}

Outcome piecewise_constant_jacobian() {
  // Single level, resolution 8, random table; x_0 varies inside cell [3, 4).
  EncodingConfig c;
  c.levels = 1;
  c.n_min = c.n_max = 8;
  c.table_size = 1u << 10;
  c.lambda = 1.0;
  const HashEncoding enc(c);
  HashTables t = enc.make_tables();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values) v = u(rng);
  const double y0 = 0.43, z0 = 0.61;
  auto jac = [&](double x, JacobianMode m) {
    const double p[3] = {x, y0, z0};
    return enc.input_jacobian(p, t, m);
  };
  std::uniform_real_distribution<double> in_cell(3.0 / 8 + 1e-6, 4.0 / 8 - 1e-6);
  const auto ref = jac(in_cell(rng), JacobianMode::kRaw);
  double dev = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto j = jac(in_cell(rng), JacobianMode::kRaw);
    for (int f = 0; f < c.features; ++f) {
      const double a = j[f * 3], b = ref[f * 3];
      dev = std::max(dev, std::abs(a - b) / std::max(std::abs(b), 1e-300));
    }
  }
  // Shared face x_0 = 4/8: one-sided raw derivatives differ.
  const double face = 4.0 / 8, eps = 1e-9;
  const auto left = jac(face - eps, JacobianMode::kRaw), right = jac(face + eps, JacobianMode::kRaw);
  double jump = 0.0;
  for (int f = 0; f < c.features; ++f) jump = std::max(jump, std::abs(left[f * 3] - right[f * 3]));
  // The smoothing term lambda*(pi/2)*sin(pi w) vanishes at w in {0, 1}; in 1D
  // the smoothed derivative therefore meets the raw one on both sides of a face.
  const double delta_face = std::max(std::abs(smooth_backward_scale(0.0, c.lambda) - 1.0),
                                     std::abs(smooth_backward_scale(1.0, c.lambda) - 1.0));
  EncodingConfig c1 = c;
  c1.dim = 1;
  c1.features = 1;
  const HashEncoding enc1(c1);
  HashTables t1 = enc1.make_tables();
  for (double& v : t1.values) v = u(rng);
  double approach = 0.0;
  for (double x : {face - eps, face + eps}) {
    const double raw = enc1.input_jacobian({&x, 1}, t1, JacobianMode::kRaw)[0];
    const double smooth = enc1.input_jacobian({&x, 1}, t1, JacobianMode::kSmoothed)[0];
    approach = std::max(approach, std::abs(smooth - raw) / std::abs(raw));
  }
  const bool ok = dev < 1e-10 && jump > 0.0 && delta_face < 1e-15 && approach < 1e-7;
  return {ok, fmt("in-cell dev %.2g, face jump %.3g, delta at face %.2g, smoothed-raw near face %.2g", dev, jump,
                  delta_face, approach)};
}

Outcome straight_through_identity() {
  double fwd = 0.0, bwd = 0.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(-1.0, 1.0);
  for (double lambda : {0.5, 1.0, 2.0, 4.0}) {
    EncodingConfig c;
    c.levels = 8;
    c.table_size = 1u << 12;
    c.lambda = lambda;
    const HashEncoding enc(c);
    HashTables t = enc.make_tables();
    for (double& v : t.values) v = s(rng);
    for (int i = 0; i < 200; ++i) {
      const double x[3] = {u(rng), u(rng), u(rng)};
      const auto lin = enc.encode(x, t, WeightMode::kLinear);
      const auto st = enc.encode(x, t, WeightMode::kStraightThrough);
      for (std::size_t j = 0; j < lin.y.size(); ++j) fwd = std::max(fwd, std::abs(lin.y[j] - st.y[j]));
      // dL/dw_i for L = sum_f g_f y_f is g . h_i; the straight-through input
      // gradient is the raw chain rule with each dL/dw_i multiplied by the scale.
      std::vector<double> g(enc.output_dim());
      for (double& v : g) v = s(rng);
      std::vector<double> grads(t.size()), dx(3);
      enc.backward(g, st.context, t, WeightMode::kStraightThrough, grads, dx);
      double want[3] = {0, 0, 0};
      for (int l = 0; l < c.levels; ++l) {
        const LevelContext& ctx = st.context[l];
        const double n = enc.levels()[l].resolution;
        double xl[3];
        for (int k = 0; k < 3; ++k) xl[k] = ctx.cell[k] + ctx.frac[k];
        const InterpWeights w = interp_weights(xl, ctx.cell);
        for (int i = 0; i < 8; ++i) {
          double dl_dw = 0.0;
          for (int f = 0; f < c.features; ++f) dl_dw += g[l * c.features + f] * t.entry(l, ctx.index[i])[f];
          const double scale = 1.0 + lambda * (std::numbers::pi / 2.0) * std::sin(std::numbers::pi * w.w[i]);
          for (int k = 0; k < 3; ++k) want[k] += n * dl_dw * scale * w.dw[i][k];
        }
      }
      bwd = std::max(bwd, max_relative_error(dx, want));
    }
  }
  return {fwd <= 1e-15 && bwd < 1e-12, fmt("forward abs diff %.2g, backward rel err %.2g, lambda in {0.5,1,2,4}", fwd, bwd)};
}

Outcome curriculum_exactness() {
  const int L = 8;
  const double ts = 1000.0, te = 5000.0;
  const CurriculumSchedule s{L, ts, te};
  auto oracle = [&](int l, double t) {
    double a = t <= ts ? 0.0 : t >= te ? double(L) : L * (t - ts) / (te - ts);
    a += 1.0;
    if (a < l) return 0.0;
    if (a - l < 1.0) return (1.0 - std::cos((a - l) * std::numbers::pi)) / 2.0;
    return 1.0;
  };
  double mid_err = 0.0;
  bool exact = true;
  int points = 0;
  for (int l = 1; l <= L; ++l) {
    for (int i = 0; i < 125; ++i, ++points) {
      const double t = 6000.0 * i / 124.0;
      const double got = curriculum_weight(l, t, s), want = oracle(l, t);
      if (want == 0.0 || want == 1.0) exact &= got == want;
      else mid_err = std::max(mid_err, std::abs(got - want));
    }
  }
  // Fine sweep over each level's ramp window; outside it the rate is flat.
  double max_step = 0.0;
  const int n = 2000000;
  for (int l = 1; l <= L; ++l) {
    const double a = ts + (te - ts) * (l - 1) / L, b = ts + (te - ts) * l / L;
    double prev = curriculum_weight(l, a, s);
    for (int i = 1; i <= n; ++i) {
      const double r = curriculum_weight(l, a + (b - a) * i / n, s);
      max_step = std::max(max_step, std::abs(r - prev));
      prev = r;
    }
    exact &= curriculum_weight(l, a, s) == 0.0 && curriculum_weight(l, b, s) == 1.0;
  }
  return {exact && mid_err < 1e-12 && max_step < 1e-6 && points == 1000,
          fmt("1000 grid points, middle-branch err %.2g, max step %.3g", mid_err, max_step)};
}

Outcome pose_gradient() {
  double worst = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const GradcheckResult& r : gradcheck_render(seed)) {
      if (r.family != "render.dpsi") continue;
      worst = std::max(worst, r.max_rel_err);
      ok &= r.checks == 12 && r.max_rel_err < 1e-4;
    }
  }
  return {ok, fmt("max rel err %.3g (2 cameras x 6 twist coords, 4 rays x 16 samples, 5 seeds)", worst)};
}

Outcome metric_formulas() {
  const double same = rotation_error(Mat3::Identity(), Mat3::Identity());
  const double opposite = rotation_error(axis_angle(Vec3(0, 0, std::numbers::pi)), Mat3::Identity());
  const double small = rotation_error(axis_angle(Vec3(0, 0, 0.1)), Mat3::Identity());
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 2.0);
  bool exact = true;
  for (int i = 0; i < 100; ++i) {
    const Vec3 a(n(rng), n(rng), n(rng)), b(n(rng), n(rng), n(rng));
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    exact &= translation_error(a, b) == dx * dx + dy * dy + dz * dz;
  }
  const bool ok = std::abs(same) < 1e-6 && std::abs(opposite - 180.0) < 1e-6 && std::abs(small - 5.7296) < 1e-4 &&
                  std::abs(small - 0.1 * 180.0 / std::numbers::pi) < 1e-6 && exact;
  return {ok, fmt("0 -> %.3g deg, pi -> %.9g deg, 0.1 rad -> %.6f deg, ", same, opposite, small) +
                  "squared norm " + (exact ? "exact on 100 pairs" : "MISMATCH")};
}

Outcome procrustes_recovery() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  Similarity known;
  known.scale = 2.3;
  known.rotation = axis_angle(Vec3(0.4, -0.9, 1.3));
  known.translation = Vec3(-1.0, 0.5, 3.0);
  std::vector<Pose> reference, learned;
  for (int i = 0; i < 20; ++i) {
    Twist psi;
    psi.omega = Vec3(n(rng), n(rng), n(rng));
    psi.v = 2.0 * Vec3(n(rng), n(rng), n(rng));
    reference.push_back(exp_map(psi));
    learned.push_back(known.inverse().apply(reference.back()));
  }
  const Alignment a = procrustes_align(learned, reference);
  const PoseErrors e = pose_errors(a.aligned, reference);
  double max_rot = 0.0, max_trans = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    max_rot = std::max(max_rot, rotation_error(a.aligned[i].R, reference[i].R));
    max_trans = std::max(max_trans, (a.aligned[i].t - reference[i].t).norm());
  }
  const bool ok = max_rot < 1e-8 && max_trans < 1e-8 && e.rotation_deg < 1e-8 && e.translation < 1e-8 &&
                  std::abs(a.transform.scale - known.scale) < 1e-8;
  return {ok, fmt("20 cameras: residual rot %.2g deg, trans %.2g, scale err %.2g", max_rot, max_trans,
                  std::abs(a.transform.scale - known.scale))};
}

Outcome hash_and_composite() {
  EncodingConfig c;
  c.table_size = 1u << 19;
  const LevelSpec level{1, 1 << 21, false};
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::uint32_t> coord(0, 1u << 21);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::uint32_t corner[3] = {coord(rng), coord(rng), coord(rng)};
    mismatches += spatial_hash(corner, level, c) != brute_hash(corner, default_primes(3), c.table_size);
  }
  // Two samples at depths 2.0 and 2.25: alpha_1 = 1 - e^{-0.5}, T_2 = e^{-0.5}.
  const std::vector<double> depths = {2.0, 2.25}, sigma = {2.0, 0.0}, rgb = {0.9, 0.3, 0.1, 0.2, 0.8, 0.4};
  const CompositeResult r = composite(sigma, rgb, depths, 1.0);
  double hand = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double want = (1.0 - std::exp(-0.5)) * rgb[k] + std::exp(-0.5) * 1.0;
    hand = std::max(hand, std::abs(r.color[k] - want));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> e(0.3);
  double pou = 0.0;
  for (int ray = 0; ray < 1000; ++ray) {
    const int n = 2 + int(u(rng) * 126);
    std::vector<double> d(n), s(n), c3(3 * n);
    double t = 0.5;
    for (int i = 0; i < n; ++i) {
      t += 0.005 + 0.05 * u(rng);
      d[i] = t;
      s[i] = e(rng);
    }
    for (double& v : c3) v = u(rng);
    const CompositeResult cr = composite(s, c3, d, 0.0);
    double sum = cr.transmittance[n];
    for (double w : cr.weight) sum += w;
    pou = std::max(pou, std::abs(sum - 1.0));
  }
  return {mismatches == 0 && hand < 1e-12 && pou < 1e-10,
          fmt("hash mismatches %.0f/10000, hand case err %.2g, partition of unity err %.2g", mismatches, hand, pou)};
}

struct AblationOutcome {
  bool ran = false;
  std::vector<SummaryRow> rows;  // a, c, e
};

AblationOutcome run_desk_ablation(const ExperimentConfig& config, const std::filesystem::path& out) {
  const auto all = component_rows();
  AblationOutcome o;
  o.rows = run_ablation(config, {all[0], all[2], all[4]}, out / "ablation");
  write_file_atomic(out / "ablation" / "summary.csv", summary_to_csv(o.rows));
  write_file_atomic(out / "ablation" / "summary.json", summary_to_json(o.rows));
  o.ran = true;
  return o;
}

Outcome determinism(ExperimentConfig config, const std::filesystem::path& out) {
  config.train.iterations = std::min(config.train.iterations, 200);
  config.render_views = 0;
  const auto a = out / "determinism" / "first", b = out / "determinism" / "second";
  run_experiment(config, a);
  run_experiment(config, b);
  const bool report = read_file(a / "report.json") == read_file(b / "report.json");
  const bool timeline = read_file(a / "timeline.csv") == read_file(b / "timeline.csv");
  return {report && timeline, std::string("report.json ") + (report ? "identical" : "DIFFERS") + ", timeline.csv " +
                                  (timeline ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path;
  bool skip_training = false;
  std::filesystem::path out = output_root() / "acceptance";
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--skip-training") == 0) skip_training = true;
    else if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) out = argv[++i];
    else config_path = argv[i];
  }
  if (config_path.empty()) {
    std::fprintf(stderr, "usage: acceptance <desk-config.json> [--skip-training] [--out DIR]\n");
    return 64;
  }
  const ExperimentConfig desk = load_config(config_path);

  report(1, "encoding input gradient", 10.0, encoding_gradient);
  report(2, "piecewise-constant Jacobian", 5.0, piecewise_constant_jacobian);
  report(3, "straight-through identity", 5.0, straight_through_identity);
  report(4, "curriculum schedule exactness", 1.0, curriculum_exactness);
  report(5, "pose gradient through renderer", 30.0, pose_gradient);
  report(6, "metric formulas", 0.0, metric_formulas);
  report(7, "procrustes recovery", 1.0, procrustes_recovery);

  if (skip_training) {
    std::printf("SKIP   8  ablation ordering (a) vs (c) vs (e)\nSKIP   9  pose registration from noise\n");
  } else {
    AblationOutcome ab;
    const auto t0 = Clock::now();
    report(8, "ablation ordering (a) vs (c) vs (e)", 1200.0, [&] {
      ab = run_desk_ablation(desk, out);
      const SummaryRow &a = ab.rows[0], &c = ab.rows[1], &e = ab.rows[2];
      const bool rot = a.rot_err_deg <= 0.5 * e.rot_err_deg;
      const bool psnr = a.psnr >= e.psnr + 2.0;
      const bool between = std::min(a.rot_err_deg, e.rot_err_deg) <= c.rot_err_deg &&
                           c.rot_err_deg <= std::max(a.rot_err_deg, e.rot_err_deg);
      return Outcome{rot && psnr && between,
                     fmt("rot a/c/e %.3f/%.3f/%.3f deg, ", a.rot_err_deg, c.rot_err_deg, e.rot_err_deg) +
                         fmt("psnr a/e %.2f/%.2f dB", a.psnr, e.psnr)};
    });
    const double train_secs = std::chrono::duration<double>(Clock::now() - t0).count();
    report(9, "pose registration from noise", 0.0, [&] {
      if (!ab.ran) return Outcome{false, "ablation did not run"};
      const SummaryRow& a = ab.rows[0];
      return Outcome{a.rot_err_deg <= 0.2 * a.initial_rot_err_deg && train_secs < 1200.0,
                     fmt("(a) rot %.3f deg from %.3f deg (ratio %.3f), 3 seeds", a.rot_err_deg, a.initial_rot_err_deg,
                         a.rot_err_deg / a.initial_rot_err_deg)};
    });
  }
  report(10, "hash and compositing oracles", 0.0, hash_and_composite);
  report(11, "determinism", 0.0, [&] { return determinism(desk, out); });

  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
