#pragma once

// RGB float images, PNG / raw float32 I/O, and the image-quality metrics.

#include <filesystem>
#include <vector>

namespace hashpose {

inline constexpr double kPsnrCap = 99.0;

/// Interleaved RGB, rows top to bottom, nominal range [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int width, int height, float fill = 0.0f);
  float& at(int x, int y, int c) { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
  float at(int x, int y, int c) const { return rgb[(std::size_t(y) * width + x) * 3 + c]; }
};

/// 8-bit PNG; values are clamped to [0, 1] and rounded.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

/// Headerless little-endian float32, height x width x 3.
void write_f32(const std::filesystem::path& path, const Image& image);
Image read_f32(const std::filesystem::path& path, int width, int height);

double mse(const Image& a, const Image& b);
/// -10 log10(MSE); +infinity for identical images.
double psnr(const Image& a, const Image& b);
/// Finite value for reports: +infinity becomes kPsnrCap.
double cap_psnr(double db);
double psnr_from_mse(double mse);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, on the channel-mean grayscale.
double ssim(const Image& a, const Image& b);

}  // namespace hashpose
