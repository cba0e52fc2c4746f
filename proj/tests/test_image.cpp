#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "hashpose/common.hpp"
#include "hashpose/image.hpp"

using namespace hashpose;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "hashpose_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img.rgb) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("psnr hand cases") {
  Image a(8, 8, 0.5f), b(8, 8, 0.5f);
  CHECK(std::isinf(psnr(a, b)));
  CHECK(cap_psnr(psnr(a, b)) == kPsnrCap);
  // Constant offset 0.1 everywhere: MSE = 0.01 -> 20 dB.
  for (float& v : b.rgb) v = 0.6f;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  for (float& v : b.rgb) v = 0.55f;
  CHECK(psnr(a, b) == doctest::Approx(26.0206).epsilon(1e-5));
  CHECK(psnr_from_mse(0.0025) == doctest::Approx(-10.0 * std::log10(0.0025)));
  CHECK_THROWS_AS(psnr(a, Image(4, 8)), ValidationError);
}

TEST_CASE("ssim hand cases") {
  const Image x = noise_image(32, 32, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  Image neg = x;
  for (float& v : neg.rgb) v = 1.0f - v;
  CHECK(ssim(x, neg) < 0.0);
  const double a = 0.3, b = 0.7, c1 = 0.01 * 0.01;
  const Image fa(16, 16, float(a)), fb(16, 16, float(b));
  const double af = float(a), bf = float(b);
  CHECK(ssim(fa, fb) == doctest::Approx((2 * af * bf + c1) / (af * af + bf * bf + c1)).epsilon(1e-9));
  CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8)), ValidationError);
}

TEST_CASE("ssim is symmetric and decreases with noise") {
  const Image x = noise_image(24, 24, 2);
  Image y = x, z = x;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 0.05f), big(0.0f, 0.2f);
  for (float& v : y.rgb) v = std::clamp(v + n(rng), 0.0f, 1.0f);
  for (float& v : z.rgb) v = std::clamp(v + big(rng), 0.0f, 1.0f);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(ssim(x, y) > ssim(x, z));
}

TEST_CASE("png and raw float round trips") {
  const Image x = noise_image(7, 5, 4);
  write_png(scratch("rt.png"), x);
  const Image p = read_png(scratch("rt.png"));
  REQUIRE(p.width == 7);
  REQUIRE(p.height == 5);
  for (std::size_t i = 0; i < x.rgb.size(); ++i) CHECK(std::abs(p.rgb[i] - x.rgb[i]) <= 0.5f / 255.0f + 1e-6f);
  write_f32(scratch("rt.f32"), x);
  const Image f = read_f32(scratch("rt.f32"), 7, 5);
  CHECK(f.rgb == x.rgb);
  CHECK_THROWS_AS(read_f32(scratch("rt.f32"), 8, 5), ValidationError);
  CHECK_THROWS(read_png(scratch("missing.png")));
}
