#include <doctest.h>

#include <filesystem>
#include <random>

#include "hashpose/io.hpp"
#include "hashpose/scene.hpp"

using namespace hashpose;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hashpose_tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

ViewConfig small_views() {
  ViewConfig v;
  v.n_views = 6;
  v.image_size = 16;
  v.n_samples = 32;
  return v;
}

SceneSpec sphere_scene() {
  SceneSpec s;
  Primitive p;
  p.center = Vec3::Zero();
  p.size = Vec3::Constant(0.6);
  p.albedo = Vec3(0.1, 0.2, 0.3);
  p.density = 200.0;
  s.primitives = {p};
  return s;
}

}  // namespace

TEST_CASE("a scene with no density renders pure background") {
  SceneSpec s = sphere_scene();
  s.primitives[0].density = 0.0;
  std::mt19937_64 rng(1);
  const SceneDataset d = generate_scene(s, small_views(), rng);
  for (const Frame& f : d.frames) {
    for (float v : f.image.rgb) CHECK(v == 1.0f);
  }
  s.white_background = false;
  std::mt19937_64 rng2(1);
  const SceneDataset b = generate_scene(s, small_views(), rng2);
  for (float v : b.frames[0].image.rgb) CHECK(v == 0.0f);
}

TEST_CASE("a centered sphere covers the same pixel count from every view") {
  std::mt19937_64 rng(2);
  ViewConfig v = small_views();
  v.image_size = 32;
  const SceneDataset d = generate_scene(sphere_scene(), v, rng);
  std::vector<int> counts;
  for (const Frame& f : d.frames) {
    int c = 0;
    for (int y = 0; y < f.image.height; ++y)
      for (int x = 0; x < f.image.width; ++x) c += f.image.at(x, y, 0) < 0.5f;
    counts.push_back(c);
  }
  CHECK(counts.front() > 20);
  for (int c : counts) CHECK(c == counts.front());
}

TEST_CASE("cameras sit on the requested sphere and look at the center") {
  std::mt19937_64 rng(3);
  const ViewConfig v = small_views();
  const SceneSpec spec = SceneSpec::default_scene();
  const Vec3 center = 0.5 * (spec.bounds_lo + spec.bounds_hi);
  const SceneDataset d = generate_scene(spec, v, rng);
  REQUIRE(d.frames.size() == 6);
  for (const Frame& f : d.frames) {
    const Vec3 offset = f.pose.t - center;
    CHECK(offset.norm() == doctest::Approx(v.radius).epsilon(1e-12));
    const Vec3 forward = -f.pose.R.col(2);
    CHECK((forward + offset.normalized()).norm() < 1e-12);
    const double elev = std::asin(offset.z() / offset.norm()) * 180.0 / 3.141592653589793;
    CHECK(elev >= v.min_elevation_deg - 1e-9);
    CHECK(elev <= v.max_elevation_deg + 1e-9);
    CHECK((f.initial_pose.R - f.pose.R).norm() == 0.0);
  }
  // Index 4 is the first held-out view with test_every = 5.
  CHECK(d.split(true) == std::vector<int>{4});
}

TEST_CASE("the same seed gives a byte-identical dataset on disk") {
  auto make = [](const std::string& name) {
    std::mt19937_64 rng(4);
    const SceneDataset d = generate_scene(SceneSpec::default_scene(), small_views(), rng);
    const auto dir = scratch(name);
    save_dataset(d, dir);
    return dir;
  };
  const auto a = make("same_a"), b = make("same_b");
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    CHECK(read_file(e.path()) == read_file(b / rel));
  }
}

TEST_CASE("dataset save and load round trip") {
  std::mt19937_64 rng(5);
  SceneDataset d = generate_scene(SceneSpec::default_scene(), small_views(), rng);
  Twist psi;
  psi.omega = Vec3(0.1, 0.2, -0.1);
  d.frames[1].initial_pose = exp_map(psi);
  const auto dir = scratch("roundtrip");
  save_dataset(d, dir);
  CHECK(std::filesystem::exists(dir / "transforms.json"));
  const SceneDataset e = load_dataset(dir);
  REQUIRE(e.frames.size() == d.frames.size());
  CHECK(e.intrinsics.focal == d.intrinsics.focal);
  CHECK(e.t_near == d.t_near);
  CHECK(e.t_far == d.t_far);
  CHECK(e.bounds_lo == d.bounds_lo);
  for (std::size_t i = 0; i < d.frames.size(); ++i) {
    CHECK(e.frames[i].name == d.frames[i].name);
    CHECK(e.frames[i].test == d.frames[i].test);
    CHECK(e.frames[i].image.rgb == d.frames[i].image.rgb);
    CHECK((e.frames[i].pose.matrix() - d.frames[i].pose.matrix()).norm() == 0.0);
    CHECK((e.frames[i].initial_pose.matrix() - d.frames[i].initial_pose.matrix()).norm() == 0.0);
  }
}

TEST_CASE("malformed datasets are rejected") {
  CHECK_THROWS_AS(load_dataset(scratch("nothing_here")), ValidationError);
  const auto dir = scratch("bad_json");
  write_file_atomic(dir / "transforms.json", "{\"camera\": [1, 2");
  CHECK_THROWS_AS(load_dataset(dir), ValidationError);
}

TEST_CASE("scene validation") {
  SceneSpec s;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = sphere_scene();
  s.primitives[0].density = -1.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = sphere_scene();
  s.primitives[0].center = Vec3(0.9, 0, 0);
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK_NOTHROW(SceneSpec::default_scene().validate());
  ViewConfig v;
  v.n_views = 1;
  CHECK_THROWS_AS(v.validate(), ValidationError);
}

TEST_CASE("signed distances of the primitives") {
  Primitive sphere;
  sphere.size = Vec3::Constant(0.5);
  CHECK(sphere.signed_distance(Vec3(1, 0, 0)) == doctest::Approx(0.5));
  CHECK(sphere.signed_distance(Vec3::Zero()) == doctest::Approx(-0.5));
  Primitive box;
  box.kind = PrimitiveKind::kBox;
  box.size = Vec3(0.5, 1.0, 0.25);
  CHECK(box.signed_distance(Vec3(1, 0, 0)) == doctest::Approx(0.5));
  CHECK(box.signed_distance(Vec3(0, 0, 0)) == doctest::Approx(-0.25));
  CHECK(box.signed_distance(Vec3(1.5, 2.0, 0)) == doctest::Approx(std::sqrt(2.0)));
}
