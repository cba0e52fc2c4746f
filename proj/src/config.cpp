#include "hashpose/config.hpp"

#include <initializer_list>
#include <set>

#include <json.hpp>

#include "hashpose/io.hpp"

namespace hashpose {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  require(j.is_object(), where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(ok.count(it.key()) == 1, "unknown field '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + "." + key + ": wrong type");
  }
}

Vec3 read_vec3(const json& j, const std::string& where) {
  require(j.is_array() && j.size() == 3, where + ": expected 3 numbers");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    throw ValidationError(where + ": expected 3 numbers");
  }
}

json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Primitive parse_primitive(const json& j, const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  const std::string type = j.value("type", "");
  Primitive p;
  if (type == "sphere") {
    check_keys(j, where, {"type", "center", "radius", "albedo", "density"});
    double r = 0.5;
    read(j, "radius", r, where);
    p.kind = PrimitiveKind::kSphere;
    p.size = Vec3::Constant(r);
  } else if (type == "box") {
    check_keys(j, where, {"type", "center", "half_size", "albedo", "density"});
    p.kind = PrimitiveKind::kBox;
    if (j.contains("half_size")) p.size = read_vec3(j["half_size"], where + ".half_size");
  } else {
    throw ValidationError(where + ".type: expected sphere or box");
  }
  if (j.contains("center")) p.center = read_vec3(j["center"], where + ".center");
  if (j.contains("albedo")) p.albedo = read_vec3(j["albedo"], where + ".albedo");
  read(j, "density", p.density, where);
  return p;
}

json primitive_json(const Primitive& p) {
  json j;
  if (p.kind == PrimitiveKind::kSphere) {
    j = {{"type", "sphere"}, {"radius", p.size.x()}};
  } else {
    j = {{"type", "box"}, {"half_size", vec3_json(p.size)}};
  }
  j["center"] = vec3_json(p.center);
  j["albedo"] = vec3_json(p.albedo);
  j["density"] = p.density;
  return j;
}

void parse_scene(const json& j, SceneSpec& s) {
  check_keys(j, "scene", {"primitives", "background", "bounds_lo", "bounds_hi", "edge_softness"});
  if (j.contains("primitives")) {
    require(j["primitives"].is_array(), "scene.primitives: expected an array");
    s.primitives.clear();
    for (std::size_t i = 0; i < j["primitives"].size(); ++i) {
      s.primitives.push_back(parse_primitive(j["primitives"][i], "scene.primitives[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("background")) {
    const std::string bg = j["background"].is_string() ? j["background"].get<std::string>() : "";
    require(bg == "white" || bg == "black", "scene.background: expected white or black");
    s.white_background = bg == "white";
  }
  if (j.contains("bounds_lo")) s.bounds_lo = read_vec3(j["bounds_lo"], "scene.bounds_lo");
  if (j.contains("bounds_hi")) s.bounds_hi = read_vec3(j["bounds_hi"], "scene.bounds_hi");
  read(j, "edge_softness", s.edge_softness, "scene");
}

json scene_json(const SceneSpec& s) {
  json prims = json::array();
  for (const Primitive& p : s.primitives) prims.push_back(primitive_json(p));
  return {{"primitives", prims},
          {"background", s.white_background ? "white" : "black"},
          {"bounds_lo", vec3_json(s.bounds_lo)},
          {"bounds_hi", vec3_json(s.bounds_hi)},
          {"edge_softness", s.edge_softness}};
}

void parse_views(const json& j, ViewConfig& v) {
  check_keys(j, "views", {"n_views", "image_size", "radius", "fov_deg", "min_elevation_deg", "max_elevation_deg",
                          "n_samples", "test_every"});
  read(j, "n_views", v.n_views, "views");
  read(j, "image_size", v.image_size, "views");
  read(j, "radius", v.radius, "views");
  read(j, "fov_deg", v.fov_deg, "views");
  read(j, "min_elevation_deg", v.min_elevation_deg, "views");
  read(j, "max_elevation_deg", v.max_elevation_deg, "views");
  read(j, "n_samples", v.n_samples, "views");
  read(j, "test_every", v.test_every, "views");
}

json views_json(const ViewConfig& v) {
  return {{"n_views", v.n_views},
          {"image_size", v.image_size},
          {"radius", v.radius},
          {"fov_deg", v.fov_deg},
          {"min_elevation_deg", v.min_elevation_deg},
          {"max_elevation_deg", v.max_elevation_deg},
          {"n_samples", v.n_samples},
          {"test_every", v.test_every}};
}

}  // namespace

void ExperimentConfig::validate() const {
  require(!name.empty(), "name must not be empty");
  if (dataset.empty()) {
    scene.validate();
    views.validate();
  }
  require(pose_noise >= 0.0, "pose_noise must be >= 0");
  encoding.validate();
  require(encoding.dim == 3, "encoding.dim must be 3 for scenes");
  decoder.validate();
  require(n_samples >= 2, "n_samples must be >= 2");
  train.validate();
  require(!ablation.seeds.empty(), "ablation.seeds must not be empty");
  require(!ablation.lambdas.empty(), "ablation.lambdas must not be empty");
  for (double l : ablation.lambdas) require(l >= 0.0, "ablation.lambdas must be >= 0");
  require(profile.resolution >= 1 && profile.n_samples >= 1, "profile: resolution and n_samples must be >= 1");
  require(profile.table == "random" || profile.table == "alternating" || profile.table == "constant",
          "profile.table: expected random, alternating or constant");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  check_keys(j, "config", {"name", "seed", "dataset", "scene", "views", "scene_seed", "pose_noise", "encoding",
                           "decoder", "n_samples", "stratified", "train", "render_views", "ablation", "profile"});
  ExperimentConfig c;
  read(j, "name", c.name, "config");
  read(j, "seed", c.seed, "config");
  read(j, "dataset", c.dataset, "config");
  if (j.contains("scene")) parse_scene(j["scene"], c.scene);
  if (j.contains("views")) parse_views(j["views"], c.views);
  read(j, "scene_seed", c.scene_seed, "config");
  read(j, "pose_noise", c.pose_noise, "config");
  read(j, "n_samples", c.n_samples, "config");
  read(j, "stratified", c.stratified, "config");
  read(j, "render_views", c.render_views, "config");

  if (j.contains("encoding")) {
    const json& e = j["encoding"];
    check_keys(e, "encoding", {"levels", "table_size", "features", "n_min", "n_max", "dim", "lambda", "primes"});
    read(e, "levels", c.encoding.levels, "encoding");
    read(e, "table_size", c.encoding.table_size, "encoding");
    read(e, "features", c.encoding.features, "encoding");
    read(e, "n_min", c.encoding.n_min, "encoding");
    read(e, "n_max", c.encoding.n_max, "encoding");
    read(e, "dim", c.encoding.dim, "encoding");
    read(e, "lambda", c.encoding.lambda, "encoding");
    read(e, "primes", c.encoding.primes, "encoding");
  }
  if (j.contains("decoder")) {
    const json& d = j["decoder"];
    check_keys(d, "decoder", {"depth", "width", "view_enc_levels"});
    read(d, "depth", c.decoder.depth, "decoder");
    read(d, "width", c.decoder.width, "decoder");
    read(d, "view_enc_levels", c.decoder.view_enc_levels, "decoder");
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train", {"iterations", "batch_rays", "lr_start", "lr_end", "table_lr_scale", "pose_lr_start",
                            "pose_lr_end", "curriculum_start", "curriculum_end", "straight_through",
                            "smooth_grad", "curriculum", "beta1", "beta2", "epsilon", "eval_fraction",
                            "threads"});
    TrainConfig& tc = c.train;
    read(t, "iterations", tc.iterations, "train");
    read(t, "batch_rays", tc.batch_rays, "train");
    read(t, "lr_start", tc.lr_start, "train");
    read(t, "lr_end", tc.lr_end, "train");
    read(t, "table_lr_scale", tc.table_lr_scale, "train");
    read(t, "pose_lr_start", tc.pose_lr_start, "train");
    read(t, "pose_lr_end", tc.pose_lr_end, "train");
    read(t, "curriculum_start", tc.curriculum_start, "train");
    read(t, "curriculum_end", tc.curriculum_end, "train");
    read(t, "straight_through", tc.flags.straight_through, "train");
    read(t, "smooth_grad", tc.flags.smooth_grad, "train");
    read(t, "curriculum", tc.flags.curriculum, "train");
    read(t, "beta1", tc.beta1, "train");
    read(t, "beta2", tc.beta2, "train");
    read(t, "epsilon", tc.epsilon, "train");
    read(t, "eval_fraction", tc.eval_fraction, "train");
    read(t, "threads", tc.threads, "train");
  }
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    check_keys(a, "ablation", {"seeds", "lambdas"});
    read(a, "seeds", c.ablation.seeds, "ablation");
    read(a, "lambdas", c.ablation.lambdas, "ablation");
  }
  if (j.contains("profile")) {
    const json& p = j["profile"];
    check_keys(p, "profile", {"resolution", "n_samples", "lambda", "table", "seed"});
    read(p, "resolution", c.profile.resolution, "profile");
    read(p, "n_samples", c.profile.n_samples, "profile");
    read(p, "lambda", c.profile.lambda, "profile");
    read(p, "table", c.profile.table, "profile");
    read(p, "seed", c.profile.seed, "profile");
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  require(std::filesystem::is_regular_file(path), "config file " + path.string() + " not found");
  return parse_config(read_file(path));
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset;
  j["scene"] = scene_json(c.scene);
  j["views"] = views_json(c.views);
  j["scene_seed"] = c.scene_seed;
  j["pose_noise"] = c.pose_noise;
  j["encoding"] = {{"levels", c.encoding.levels},     {"table_size", c.encoding.table_size},
                   {"features", c.encoding.features}, {"n_min", c.encoding.n_min},
                   {"n_max", c.encoding.n_max},       {"dim", c.encoding.dim},
                   {"lambda", c.encoding.lambda},     {"primes", c.encoding.effective_primes()}};
  j["decoder"] = {{"depth", c.decoder.depth},
                  {"width", c.decoder.width},
                  {"view_enc_levels", c.decoder.view_enc_levels}};
  j["n_samples"] = c.n_samples;
  j["stratified"] = c.stratified;
  const TrainConfig& t = c.train;
  j["train"] = {{"iterations", t.iterations},
                {"batch_rays", t.batch_rays},
                {"lr_start", t.lr_start},
                {"lr_end", t.lr_end},
                {"table_lr_scale", t.table_lr_scale},
                {"pose_lr_start", t.pose_lr_start},
                {"pose_lr_end", t.pose_lr_end},
                {"curriculum_start", t.curriculum_start},
                {"curriculum_end", t.curriculum_end},
                {"straight_through", t.flags.straight_through},
                {"smooth_grad", t.flags.smooth_grad},
                {"curriculum", t.flags.curriculum},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"eval_fraction", t.eval_fraction},
                {"threads", t.threads}};
  j["render_views"] = c.render_views;
  j["ablation"] = {{"seeds", c.ablation.seeds}, {"lambdas", c.ablation.lambdas}};
  j["profile"] = {{"resolution", c.profile.resolution},
                  {"n_samples", c.profile.n_samples},
                  {"lambda", c.profile.lambda},
                  {"table", c.profile.table},
                  {"seed", c.profile.seed}};
  return j.dump(2);
}

SceneFile load_scene_file(const std::filesystem::path& path) {
  require(std::filesystem::is_regular_file(path), "scene file " + path.string() + " not found");
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene file: ") + e.what());
  }
  check_keys(j, "scene file", {"scene", "views", "seed"});
  SceneFile f;
  if (j.contains("scene")) parse_scene(j["scene"], f.scene);
  if (j.contains("views")) parse_views(j["views"], f.views);
  read(j, "seed", f.seed, "scene file");
  f.scene.validate();
  f.views.validate();
  return f;
}

}  // namespace hashpose
