#pragma once

// Scale-invariant keypoints and 128-d gradient-histogram descriptors,
// following Lowe (IJCV 2004): Gaussian scale space, difference-of-Gaussian
// extrema with sub-pixel refinement, contrast and edge rejection, dominant
// orientations from a 36-bin histogram, and a 4x4x8 descriptor clamped at
// 0.2 and renormalized.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <tuple>
#include <vector>

#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/image.hpp"

namespace triselect {

inline constexpr int kDescriptorDim = 128;
using Descriptor = std::array<float, kDescriptorDim>;

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double scale = 1.0;        // sigma of the detection level, input-image pixels
  double orientation = 0.0;  // radians in [0, 2*pi)
  double response = 0.0;     // |DoG| at the refined extremum

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct DescriptorSet {
  std::uint64_t pid = 0;
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;

  std::size_t size() const noexcept { return descriptors.size(); }
  bool empty() const noexcept { return descriptors.empty(); }

  friend bool operator==(const DescriptorSet&, const DescriptorSet&) = default;
};

struct ExtractorParams {
  int octave_layers = 3;
  double contrast_threshold = 0.03;  // on |DoG| with intensities in [0, 1]
  double edge_threshold = 10.0;      // principal-curvature ratio r
  double sigma = 1.6;
  double input_blur = 0.5;           // assumed blur of the input image
  bool upsample = true;              // start the pyramid at twice the input size
  int max_keypoints = 0;             // 0 = unlimited; else keep the strongest locations (each may carry several orientations)
};

inline constexpr int kMinExtractSide = 16;

namespace sift_detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int width, int height) : w(width), h(height), v(static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {}

  float at(int x, int y) const noexcept { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
  float& at(int x, int y) noexcept { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
};

inline int reflect101(int i, int n) noexcept {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline Plane gaussian_blur(const Plane& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double k = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(k);
    sum += k;
  }
  for (float& k : kernel) k = static_cast<float>(k / sum);

  // Horizontal pass over a reflect-padded row, then a vertical pass that
  // accumulates whole rows; both keep the per-pixel tap order.
  Plane tmp(src.w, src.h);
  std::vector<float> row(static_cast<std::size_t>(src.w + 2 * radius));
  for (int y = 0; y < src.h; ++y) {
    for (int x = -radius; x < src.w + radius; ++x) row[static_cast<std::size_t>(x + radius)] = src.at(reflect101(x, src.w), y);
    float* dst = &tmp.at(0, y);
    for (int x = 0; x < src.w; ++x) {
      const float* in = row.data() + x;
      float acc = 0.0f;
      for (int i = 0; i <= 2 * radius; ++i) acc += kernel[static_cast<std::size_t>(i)] * in[i];
      dst[x] = acc;
    }
  }
  Plane out(src.w, src.h);
  for (int y = 0; y < src.h; ++y) {
    float* dst = &out.at(0, y);
    for (int i = -radius; i <= radius; ++i) {
      const float k = kernel[static_cast<std::size_t>(i + radius)];
      const float* in = &tmp.at(0, reflect101(y + i, src.h));
      for (int x = 0; x < src.w; ++x) dst[x] += k * in[x];
    }
  }
  return out;
}

inline Plane upsample2x(const Plane& src) {
  Plane out(src.w * 2, src.h * 2);
  for (int y = 0; y < out.h; ++y) {
    const double sy = std::min(y * 0.5, static_cast<double>(src.h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, src.h - 1);
    const float fy = static_cast<float>(sy - y0);
    for (int x = 0; x < out.w; ++x) {
      const double sx = std::min(x * 0.5, static_cast<double>(src.w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, src.w - 1);
      const float fx = static_cast<float>(sx - x0);
      const float top = src.at(x0, y0) * (1 - fx) + src.at(x1, y0) * fx;
      const float bot = src.at(x0, y1) * (1 - fx) + src.at(x1, y1) * fx;
      out.at(x, y) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

inline Plane downsample2x(const Plane& src) {
  Plane out(src.w / 2, src.h / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) out.at(x, y) = src.at(2 * x, 2 * y);
  }
  return out;
}

inline constexpr int kBorder = 5;
inline constexpr int kMaxInterpSteps = 5;
inline constexpr int kOriBins = 36;
inline constexpr double kOriSigmaFactor = 1.5;
inline constexpr double kOriRadiusFactor = 3.0 * kOriSigmaFactor;
inline constexpr double kOriPeakRatio = 0.8;
inline constexpr int kDescWidth = 4;
inline constexpr int kDescBins = 8;
inline constexpr double kDescScaleFactor = 3.0;
inline constexpr double kDescClamp = 0.2;

/// Pyramid-level candidate before orientation assignment.
struct Candidate {
  int octave = 0;
  int layer = 0;     // integer Gaussian layer used for gradients
  int x = 0;         // integer position in octave pixels
  int y = 0;
  double fx = 0.0;   // refined position in octave pixels
  double fy = 0.0;
  double octave_scale = 0.0;
  double response = 0.0;
};

struct Pyramid {
  std::vector<std::vector<Plane>> gauss;  // [octave][0 .. layers+2]
  std::vector<std::vector<Plane>> dog;    // [octave][0 .. layers+1]
};

inline Pyramid build_pyramid(const GrayImage& img, const ExtractorParams& p) {
  Plane base(img.width(), img.height());
  std::copy(img.pixels().begin(), img.pixels().end(), base.v.begin());
  double have = p.input_blur;
  if (p.upsample) {
    base = upsample2x(base);
    have *= 2.0;
  }
  base = gaussian_blur(base, std::sqrt(std::max(p.sigma * p.sigma - have * have, 0.01)));

  const int s = p.octave_layers;
  const int min_side = std::min(base.w, base.h);
  const int octaves = std::max(1, static_cast<int>(std::floor(std::log2(min_side / 16.0))) + 1);

  // Incremental blur taking layer i-1 to total sigma * k^i.
  std::vector<double> inc(static_cast<std::size_t>(s + 3));
  const double k = std::pow(2.0, 1.0 / s);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = std::pow(k, i - 1) * p.sigma;
    const double total = prev * k;
    inc[static_cast<std::size_t>(i)] = std::sqrt(total * total - prev * prev);
  }

  Pyramid pyr;
  pyr.gauss.resize(static_cast<std::size_t>(octaves));
  pyr.dog.resize(static_cast<std::size_t>(octaves));
  for (int o = 0; o < octaves; ++o) {
    auto& g = pyr.gauss[static_cast<std::size_t>(o)];
    g.reserve(static_cast<std::size_t>(s + 3));
    g.push_back(o == 0 ? base : downsample2x(pyr.gauss[static_cast<std::size_t>(o - 1)][static_cast<std::size_t>(s)]));
    for (int i = 1; i < s + 3; ++i) g.push_back(gaussian_blur(g.back(), inc[static_cast<std::size_t>(i)]));
    auto& d = pyr.dog[static_cast<std::size_t>(o)];
    d.reserve(static_cast<std::size_t>(s + 2));
    for (int i = 0; i < s + 2; ++i) {
      Plane diff(g[0].w, g[0].h);
      for (std::size_t j = 0; j < diff.v.size(); ++j) diff.v[j] = g[static_cast<std::size_t>(i + 1)].v[j] - g[static_cast<std::size_t>(i)].v[j];
      d.push_back(std::move(diff));
    }
  }
  return pyr;
}

inline bool is_extremum(const std::vector<Plane>& dog, int layer, int x, int y) {
  const float v = dog[static_cast<std::size_t>(layer)].at(x, y);
  const bool maxima = v > 0.0f;
  for (int l = layer - 1; l <= layer + 1; ++l) {
    const Plane& pl = dog[static_cast<std::size_t>(l)];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (l == layer && dx == 0 && dy == 0) continue;
        const float n = pl.at(x + dx, y + dy);
        if (maxima ? v < n : v > n) return false;
      }
    }
  }
  return true;
}

/// Quadratic sub-pixel/sub-scale refinement plus contrast and edge tests.
inline bool refine(const std::vector<Plane>& dog, int octave, int layer, int x, int y, const ExtractorParams& p,
                   Candidate& out) {
  const int s = p.octave_layers;
  const int w = dog[0].w;
  const int h = dog[0].h;
  double ox = 0.0;
  double oy = 0.0;
  double ol = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double ds = 0.0;
  int step = 0;
  for (; step < kMaxInterpSteps; ++step) {
    const Plane& c = dog[static_cast<std::size_t>(layer)];
    const Plane& prv = dog[static_cast<std::size_t>(layer - 1)];
    const Plane& nxt = dog[static_cast<std::size_t>(layer + 1)];
    const double v2 = 2.0 * c.at(x, y);
    dx = 0.5 * (c.at(x + 1, y) - c.at(x - 1, y));
    dy = 0.5 * (c.at(x, y + 1) - c.at(x, y - 1));
    ds = 0.5 * (nxt.at(x, y) - prv.at(x, y));
    const double dxx = c.at(x + 1, y) + c.at(x - 1, y) - v2;
    const double dyy = c.at(x, y + 1) + c.at(x, y - 1) - v2;
    const double dss = nxt.at(x, y) + prv.at(x, y) - v2;
    const double dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
    const double dxs = 0.25 * (nxt.at(x + 1, y) - nxt.at(x - 1, y) - prv.at(x + 1, y) + prv.at(x - 1, y));
    const double dys = 0.25 * (nxt.at(x, y + 1) - nxt.at(x, y - 1) - prv.at(x, y + 1) + prv.at(x, y - 1));

    // Solve H * off = -grad by Cramer's rule.
    const double det = dxx * (dyy * dss - dys * dys) - dxy * (dxy * dss - dys * dxs) + dxs * (dxy * dys - dyy * dxs);
    if (std::abs(det) < 1e-15) return false;
    const double bx = -dx;
    const double by = -dy;
    const double bs = -ds;
    ox = (bx * (dyy * dss - dys * dys) - dxy * (by * dss - dys * bs) + dxs * (by * dys - dyy * bs)) / det;
    oy = (dxx * (by * dss - dys * bs) - bx * (dxy * dss - dys * dxs) + dxs * (dxy * bs - by * dxs)) / det;
    ol = (dxx * (dyy * bs - by * dys) - dxy * (dxy * bs - by * dxs) + bx * (dxy * dys - dyy * dxs)) / det;

    if (std::abs(ox) < 0.5 && std::abs(oy) < 0.5 && std::abs(ol) < 0.5) break;
    if (std::abs(ox) > 1e4 || std::abs(oy) > 1e4 || std::abs(ol) > 1e4) return false;
    x += static_cast<int>(std::lround(ox));
    y += static_cast<int>(std::lround(oy));
    layer += static_cast<int>(std::lround(ol));
    if (layer < 1 || layer > s || x < kBorder || x >= w - kBorder || y < kBorder || y >= h - kBorder) return false;
  }
  if (step >= kMaxInterpSteps) return false;

  const Plane& c = dog[static_cast<std::size_t>(layer)];
  const double contrast = c.at(x, y) + 0.5 * (dx * ox + dy * oy + ds * ol);
  if (std::abs(contrast) < p.contrast_threshold) return false;

  const double v2 = 2.0 * c.at(x, y);
  const double dxx = c.at(x + 1, y) + c.at(x - 1, y) - v2;
  const double dyy = c.at(x, y + 1) + c.at(x, y - 1) - v2;
  const double dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = p.edge_threshold;
  if (det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det) return false;

  out.octave = octave;
  out.layer = layer;
  out.x = x;
  out.y = y;
  out.fx = x + ox;
  out.fy = y + oy;
  out.octave_scale = p.sigma * std::pow(2.0, (layer + ol) / s);
  out.response = std::abs(contrast);
  return true;
}

inline std::vector<double> dominant_orientations(const Plane& img, const Candidate& c) {
  const double sigma_w = kOriSigmaFactor * c.octave_scale;
  const int radius = static_cast<int>(std::lround(kOriRadiusFactor * c.octave_scale));
  const double expf_scale = -1.0 / (2.0 * sigma_w * sigma_w);
  std::array<double, kOriBins> hist{};
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = c.y + dy;
    if (y <= 0 || y >= img.h - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = c.x + dx;
      if (x <= 0 || x >= img.w - 1) continue;
      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += 2.0 * std::numbers::pi;
      int bin = static_cast<int>(std::lround(ang * kOriBins / (2.0 * std::numbers::pi)));
      if (bin >= kOriBins) bin -= kOriBins;
      hist[static_cast<std::size_t>(bin)] += std::exp((dx * dx + dy * dy) * expf_scale) * mag;
    }
  }
  std::array<double, kOriBins> smooth{};
  for (int i = 0; i < kOriBins; ++i) {
    const auto at = [&](int j) { return hist[static_cast<std::size_t>((j + kOriBins) % kOriBins)]; };
    smooth[static_cast<std::size_t>(i)] =
        (at(i - 2) + at(i + 2)) * (1.0 / 16.0) + (at(i - 1) + at(i + 1)) * (4.0 / 16.0) + at(i) * (6.0 / 16.0);
  }
  const double max_v = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> out;
  if (max_v <= 0.0) return out;
  const double thr = kOriPeakRatio * max_v;
  for (int i = 0; i < kOriBins; ++i) {
    const double l = smooth[static_cast<std::size_t>((i + kOriBins - 1) % kOriBins)];
    const double r = smooth[static_cast<std::size_t>((i + 1) % kOriBins)];
    const double v = smooth[static_cast<std::size_t>(i)];
    if (v > l && v > r && v >= thr) {
      double bin = i + 0.5 * (l - r) / (l - 2.0 * v + r);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      double ang = bin * 2.0 * std::numbers::pi / kOriBins;
      if (ang >= 2.0 * std::numbers::pi) ang = 0.0;
      out.push_back(ang);
    }
  }
  return out;
}

/// Returns false when the patch has no gradient energy.
inline bool compute_descriptor(const Plane& img, const Candidate& c, double orientation, Descriptor& out) {
  constexpr int d = kDescWidth;
  constexpr int n = kDescBins;
  const double hist_width = kDescScaleFactor * c.octave_scale;
  int radius = static_cast<int>(std::lround(hist_width * std::numbers::sqrt2 * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::sqrt(static_cast<double>(img.w) * img.w + static_cast<double>(img.h) * img.h)));
  const double cos_t = std::cos(orientation) / hist_width;
  const double sin_t = std::sin(orientation) / hist_width;
  const double exp_scale = -1.0 / (d * d * 0.5);
  const double bins_per_rad = n / (2.0 * std::numbers::pi);

  std::array<double, (d + 2) * (d + 2) * (n + 2)> hist{};
  const auto cell = [&](int r, int col, int o) -> double& {
    return hist[static_cast<std::size_t>(((r * (d + 2)) + col) * (n + 2) + o)];
  };

  for (int i = -radius; i <= radius; ++i) {
    const int y = c.y + i;
    if (y <= 0 || y >= img.h - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = c.x + j;
      if (x <= 0 || x >= img.w - 1) continue;
      // Offsets expressed in the keypoint frame (x-axis along the orientation).
      const double c_rot = j * cos_t + i * sin_t;
      const double r_rot = -j * sin_t + i * cos_t;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d) continue;

      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double rel = std::atan2(gy, gx) - orientation;
      while (rel < 0.0) rel += 2.0 * std::numbers::pi;
      while (rel >= 2.0 * std::numbers::pi) rel -= 2.0 * std::numbers::pi;
      const double obin = rel * bins_per_rad;
      const double weight = mag * std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double dr = rbin - r0;
      const double dc = cbin - c0;
      const double dobin = obin - o0;
      if (o0 >= n) o0 -= n;

      for (int a = 0; a <= 1; ++a) {
        const double wr = a ? weight * dr : weight * (1.0 - dr);
        for (int b = 0; b <= 1; ++b) {
          const double wc = b ? wr * dc : wr * (1.0 - dc);
          cell(r0 + 1 + a, c0 + 1 + b, o0) += wc * (1.0 - dobin);
          cell(r0 + 1 + a, c0 + 1 + b, o0 + 1) += wc * dobin;
        }
      }
    }
  }

  std::array<double, kDescriptorDim> raw{};
  for (int r = 0; r < d; ++r) {
    for (int col = 0; col < d; ++col) {
      cell(r + 1, col + 1, 0) += cell(r + 1, col + 1, n);
      for (int o = 0; o < n; ++o) raw[static_cast<std::size_t>((r * d + col) * n + o)] = cell(r + 1, col + 1, o);
    }
  }

  double norm = 0.0;
  for (double v : raw) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) return false;
  const double clamp = kDescClamp * norm;
  double norm2 = 0.0;
  for (double& v : raw) {
    v = std::min(v, clamp);
    norm2 += v * v;
  }
  norm2 = std::sqrt(norm2);
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / norm2);
  return true;
}

}  // namespace sift_detail

/// Detects keypoints and computes unit-norm 128-d descriptors. Output order is
/// deterministic for identical input.
inline DescriptorSet extract_features(const GrayImage& img, const ExtractorParams& params = {}, std::uint64_t pid = 0) {
  using namespace sift_detail;
  if (std::min(img.width(), img.height()) < kMinExtractSide) {
    throw PidError(ErrorKind::ImageTooSmall, pid,
                   fmt::format("image {}x{} below the {}px minimum side", img.width(), img.height(), kMinExtractSide));
  }
  if (params.octave_layers < 1 || !(params.sigma > 0.0)) {
    throw Error(ErrorKind::ConfigInvalid, "extractor needs octave_layers >= 1 and sigma > 0");
  }
  const Pyramid pyr = build_pyramid(img, params);
  const int s = params.octave_layers;
  const float prefilter = static_cast<float>(0.5 * params.contrast_threshold);

  std::vector<Candidate> candidates;
  for (int o = 0; o < static_cast<int>(pyr.dog.size()); ++o) {
    const auto& dog = pyr.dog[static_cast<std::size_t>(o)];
    const int w = dog[0].w;
    const int h = dog[0].h;
    for (int layer = 1; layer <= s; ++layer) {
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          if (std::abs(dog[static_cast<std::size_t>(layer)].at(x, y)) <= prefilter) continue;
          if (!is_extremum(dog, layer, x, y)) continue;
          Candidate c;
          if (refine(dog, o, layer, x, y, params, c)) candidates.push_back(c);
        }
      }
    }
  }

  if (params.max_keypoints > 0 && candidates.size() > static_cast<std::size_t>(params.max_keypoints)) {
    std::vector<std::size_t> idx(candidates.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return candidates[a].response > candidates[b].response; });
    idx.resize(static_cast<std::size_t>(params.max_keypoints));
    std::sort(idx.begin(), idx.end());
    std::vector<Candidate> kept;
    kept.reserve(idx.size());
    for (std::size_t i : idx) kept.push_back(candidates[i]);
    candidates = std::move(kept);
  }

  DescriptorSet out;
  out.pid = pid;
  std::set<std::tuple<double, double, double, double>> seen;
  for (const auto& c : candidates) {
    const Plane& g = pyr.gauss[static_cast<std::size_t>(c.octave)][static_cast<std::size_t>(c.layer)];
    const double to_input = std::ldexp(1.0, c.octave) / (params.upsample ? 2.0 : 1.0);
    for (double ori : dominant_orientations(g, c)) {
      Keypoint kp{c.fx * to_input, c.fy * to_input, c.octave_scale * to_input, ori, c.response};
      kp.x = std::clamp(kp.x, 0.0, static_cast<double>(img.width() - 1));
      kp.y = std::clamp(kp.y, 0.0, static_cast<double>(img.height() - 1));
      if (!seen.emplace(kp.x, kp.y, kp.scale, kp.orientation).second) continue;
      Descriptor desc{};
      if (!compute_descriptor(g, c, ori, desc)) continue;
      out.keypoints.push_back(kp);
      out.descriptors.push_back(desc);
    }
  }
  return out;
}

}  // namespace triselect
