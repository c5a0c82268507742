#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "triselect/error.hpp"

namespace triselect {

/// Row-major luminance image with values in [0, 1].
class GrayImage {
 public:
  static constexpr int kMinSide = 8;

  GrayImage() = default;

  GrayImage(int width, int height, float fill = 0.0f) : width_(width), height_(height) {
    check_size(width, height);
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), std::clamp(fill, 0.0f, 1.0f));
  }

  /// Takes ownership of `pixels`; values are clamped into [0, 1].
  GrayImage(int width, int height, std::vector<float> pixels) : width_(width), height_(height), pixels_(std::move(pixels)) {
    check_size(width, height);
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorKind::ConstraintViolation,
                  fmt::format("pixel buffer has {} values, expected {}x{}", pixels_.size(), width, height));
    }
    for (float& p : pixels_) p = std::isfinite(p) ? std::clamp(p, 0.0f, 1.0f) : 0.0f;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  float at(int x, int y) const noexcept { return pixels_[index(x, y)]; }
  float& at(int x, int y) noexcept { return pixels_[index(x, y)]; }

  std::span<const float> pixels() const noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  static void check_size(int w, int h) {
    if (w < kMinSide || h < kMinSide) {
      throw Error(ErrorKind::ImageTooSmall, fmt::format("image {}x{} below the {}px minimum side", w, h, kMinSide));
    }
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

/// Luminance from 8-bit RGB: 0.299 R + 0.587 G + 0.114 B.
inline float luminance(unsigned char r, unsigned char g, unsigned char b) noexcept {
  return static_cast<float>((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
}

/// Rotates by 90 degrees counter-clockwise (exact pixel permutation).
inline GrayImage rotate90(const GrayImage& img) {
  GrayImage out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out.at(y, img.width() - 1 - x) = img.at(x, y);
  }
  return out;
}

inline double mean_abs_diff(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::ConstraintViolation, "image sizes differ");
  }
  double sum = 0.0;
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) sum += std::abs(static_cast<double>(pa[i]) - pb[i]);
  return pa.empty() ? 0.0 : sum / static_cast<double>(pa.size());
}

}  // namespace triselect
