#include "hashpose/dataset.hpp"

#include <fstream>

#include <json.hpp>

#include "hashpose/io.hpp"

namespace hashpose {
namespace {

using nlohmann::json;

json matrix_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return rows;
}

Mat4 matrix_from_json(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 4, what + ": expected a 4x4 matrix");
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    require(j[r].is_array() && j[r].size() == 4, what + ": expected a 4x4 matrix");
    for (int c = 0; c < 4; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from_json(const json& j, const std::string& what) {
  require(j.is_array() && j.size() == 3, what + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Pose pose_from_json(const json& j, const std::string& what) {
  Pose p = Pose::from_matrix(matrix_from_json(j, what));
  p.validate(1e-6);
  return p;
}

}  // namespace

void SceneDataset::validate() const {
  intrinsics.validate();
  require(!frames.empty(), "dataset: no frames");
  require((bounds_hi.array() > bounds_lo.array()).all(), "dataset: bounds_hi must exceed bounds_lo");
  require(t_near >= 0.0 && t_near < t_far, "dataset: need 0 <= near < far");
  for (const Frame& f : frames) {
    require(f.image.width == intrinsics.width && f.image.height == intrinsics.height &&
                f.image.rgb.size() == std::size_t(intrinsics.width) * intrinsics.height * 3,
            "dataset: frame " + f.name + " does not match the shared intrinsics");
  }
}

std::vector<int> SceneDataset::split(bool test) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].test == test) out.push_back(int(i));
  }
  return out;
}

void save_dataset(const SceneDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  json j;
  j["camera"] = {{"focal", ds.intrinsics.focal}, {"cx", ds.intrinsics.cx}, {"cy", ds.intrinsics.cy},
                 {"width", ds.intrinsics.width}, {"height", ds.intrinsics.height}};
  j["bounds"] = {{"lo", vec_json(ds.bounds_lo)}, {"hi", vec_json(ds.bounds_hi)}};
  j["near"] = ds.t_near;
  j["far"] = ds.t_far;
  j["background"] = ds.white_background ? "white" : "black";
  j["frames"] = json::array();
  for (const Frame& f : ds.frames) {
    const std::string png = "images/" + f.name + ".png";
    const std::string raw = "images/" + f.name + ".f32";
    write_png(dir / png, f.image);
    write_f32(dir / raw, f.image);
    j["frames"].push_back({{"name", f.name},
                           {"file_path", png},
                           {"raw_path", raw},
                           {"split", f.test ? "test" : "train"},
                           {"transform_matrix", matrix_json(f.pose.matrix())},
                           {"initial_transform_matrix", matrix_json(f.initial_pose.matrix())}});
  }
  write_file_atomic(dir / "transforms.json", j.dump(2) + "\n");
}

SceneDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "transforms.json";
  require(std::filesystem::exists(manifest), "dataset: " + manifest.string() + " not found");
  json j;
  try {
    j = json::parse(read_file(manifest));
  } catch (const json::exception& e) {
    throw ValidationError("dataset: " + manifest.string() + ": " + e.what());
  }
  SceneDataset ds;
  try {
    const json& cam = j.at("camera");
    ds.intrinsics.focal = cam.at("focal").get<double>();
    ds.intrinsics.cx = cam.at("cx").get<double>();
    ds.intrinsics.cy = cam.at("cy").get<double>();
    ds.intrinsics.width = cam.at("width").get<int>();
    ds.intrinsics.height = cam.at("height").get<int>();
    ds.bounds_lo = vec_from_json(j.at("bounds").at("lo"), "bounds.lo");
    ds.bounds_hi = vec_from_json(j.at("bounds").at("hi"), "bounds.hi");
    ds.t_near = j.at("near").get<double>();
    ds.t_far = j.at("far").get<double>();
    const std::string bg = j.value("background", "white");
    require(bg == "white" || bg == "black", "dataset: background must be white or black");
    ds.white_background = bg == "white";
    for (const json& fj : j.at("frames")) {
      Frame f;
      f.name = fj.value("name", std::filesystem::path(fj.at("file_path").get<std::string>()).stem().string());
      f.pose = pose_from_json(fj.at("transform_matrix"), f.name + ".transform_matrix");
      f.initial_pose = fj.contains("initial_transform_matrix")
                           ? pose_from_json(fj.at("initial_transform_matrix"), f.name + ".initial_transform_matrix")
                           : f.pose;
      const std::string split = fj.value("split", "train");
      require(split == "train" || split == "test", "dataset: split must be train or test");
      f.test = split == "test";
      if (fj.contains("raw_path") && std::filesystem::exists(dir / fj.at("raw_path").get<std::string>())) {
        f.image = read_f32(dir / fj.at("raw_path").get<std::string>(), ds.intrinsics.width, ds.intrinsics.height);
      } else {
        f.image = read_png(dir / fj.at("file_path").get<std::string>());
      }
      ds.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ValidationError("dataset: " + manifest.string() + ": " + e.what());
  }
  ds.validate();
  return ds;
}

}  // namespace hashpose
