#include "hashpose/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include <png.h>

#include "hashpose/common.hpp"
#include "hashpose/io.hpp"

namespace hashpose {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  require(a.width == b.width && a.height == b.height && a.rgb.size() == b.rgb.size(),
          std::string(what) + ": image size mismatch");
}

std::vector<double> grayscale(const Image& img) {
  std::vector<double> g(std::size_t(img.width) * img.height);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (double(img.rgb[3 * i]) + img.rgb[3 * i + 1] + img.rgb[3 * i + 2]) / 3.0;
  }
  return g;
}

}  // namespace

Image::Image(int w, int h, float fill) : width(w), height(h), rgb(std::size_t(w) * h * 3, fill) {
  require(w >= 0 && h >= 0, "image: negative size");
}

void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.width > 0 && image.height > 0, "write_png: empty image");
  std::vector<unsigned char> pixels(image.rgb.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(double(image.rgb[i]), 0.0, 1.0);
    pixels[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(image.width);
  png.height = png_uint_32(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("write_png: ") + png.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("write_png: ") + png.message);
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

Image read_png(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ValidationError("read_png: " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ValidationError("read_png: " + path.string() + ": " + png.message);
  }
  Image img(int(png.width), int(png.height));
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = float(pixels[i]) / 255.0f;
  return img;
}

void write_f32(const std::filesystem::path& path, const Image& image) {
  static_assert(std::numeric_limits<float>::is_iec559);
  std::string bytes(image.rgb.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), image.rgb.data(), bytes.size());
  write_file_atomic(path, bytes);
}

Image read_f32(const std::filesystem::path& path, int width, int height) {
  const std::string bytes = read_file(path);
  Image img(width, height);
  require(bytes.size() == img.rgb.size() * sizeof(float),
          "read_f32: " + path.string() + " does not hold a " + std::to_string(width) + "x" +
              std::to_string(height) + " RGB image");
  std::memcpy(img.rgb.data(), bytes.data(), bytes.size());
  return img;
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  require(!a.rgb.empty(), "mse: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double e = double(a.rgb[i]) - double(b.rgb[i]);
    sum += e * e;
  }
  return sum / double(a.rgb.size());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

double cap_psnr(double db) { return std::min(db, kPsnrCap); }

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  require(a.width >= kWin && a.height >= kWin, "ssim: image smaller than the 11x11 window");

  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const std::vector<double> x = grayscale(a);
  const std::vector<double> y = grayscale(b);
  const int w = a.width;
  const int h = a.height;
  const int ow = w - kWin + 1;
  const int oh = h - kWin + 1;

  // Separable filter: horizontal pass over all rows, then vertical.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(std::size_t(h) * ow);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += kernel[k] * src[std::size_t(r) * w + c + k];
        tmp[std::size_t(r) * ow + c] = s;
      }
    }
    std::vector<double> out(std::size_t(oh) * ow);
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int k = 0; k < kWin; ++k) s += kernel[k] * tmp[std::size_t(r + k) * ow + c];
        out[std::size_t(r) * ow + c] = s;
      }
    }
    return out;
  };
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter(x), my = filter(y), mxx = filter(xx), myy = filter(yy), mxy = filter(xy);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / double(mx.size());
}

}  // namespace hashpose
