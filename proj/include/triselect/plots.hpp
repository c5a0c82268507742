#pragma once

// Standalone SVG plots: silhouette score per k and the Stage II scatter.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/report.hpp"

namespace triselect {

namespace detail {

inline constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                         "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigInvalid, fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace detail

/// Bar chart of per-k silhouette scores; the best k is highlighted.
inline std::string silhouette_svg(const SilhouetteReport& rep) {
  constexpr int W = 480, H = 320, L = 50, R = 20, T = 30, B = 40;
  const int plot_w = W - L - R;
  const int plot_h = H - T - B;
  std::string s = fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)"
                              "\n",
                              W, H, W, H);
  s += fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)"
                   "\n",
                   W, H);
  s += fmt::format(R"(<text x="{}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">silhouette score by k</text>)"
                   "\n",
                   W / 2);
  // Axis spans [-1, 1] when any score is negative, else [0, 1].
  double lo = 0.0;
  for (const auto& [k, v] : rep.per_k) lo = std::min(lo, v < 0.0 ? -1.0 : 0.0);
  const auto y_of = [&](double v) { return T + plot_h * (1.0 - (v - lo) / (1.0 - lo)); };
  s += fmt::format(R"(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>)"
                   "\n",
                   L, T, L, T + plot_h);
  s += fmt::format(R"(<line x1="{}" y1="{:.2f}" x2="{}" y2="{:.2f}" stroke="black"/>)"
                   "\n",
                   L, y_of(0.0), L + plot_w, y_of(0.0));
  for (double tick : {lo, 0.5 * (lo + 1.0), 1.0}) {
    s += fmt::format(R"(<text x="{}" y="{:.2f}" font-family="sans-serif" font-size="10" text-anchor="end">{:.2f}</text>)"
                     "\n",
                     L - 4, y_of(tick) + 3, tick);
  }
  if (rep.per_k.empty()) {
    s += fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">no silhouette data</text>)"
                     "\n",
                     L + plot_w / 2, T + plot_h / 2);
  }
  const double slot = rep.per_k.empty() ? 0.0 : static_cast<double>(plot_w) / static_cast<double>(rep.per_k.size());
  std::size_t i = 0;
  for (const auto& [k, v] : rep.per_k) {
    const double x = L + slot * (static_cast<double>(i) + 0.15);
    const double y0 = y_of(0.0);
    const double y1 = y_of(v);
    s += fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="{}"><title>k={} score={:.6f}</title></rect>)"
                     "\n",
                     x, std::min(y0, y1), slot * 0.7, std::abs(y1 - y0), k == rep.best_k ? "#d62728" : "#1f77b4", k, v);
    s += fmt::format(R"(<text x="{:.2f}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>)"
                     "\n",
                     x + slot * 0.35, T + plot_h + 16, k);
    ++i;
  }
  s += fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">k</text>)"
                   "\n",
                   L + plot_w / 2, H - 6);
  s += "</svg>\n";
  return s;
}

/// Scatter of normalized (dx, dy) colored by cluster label.
inline std::string clusters_svg(const Stage2Report& rep) {
  constexpr int W = 480, H = 480, M = 40;
  double extent = 1e-9;
  for (const auto& f : rep.features) extent = std::max({extent, std::abs(f.dx), std::abs(f.dy)});
  extent *= 1.1;
  const double span = W - 2 * M;
  const auto px = [&](double v) { return M + span * (v + extent) / (2.0 * extent); };
  const auto py = [&](double v) { return M + span * (extent - v) / (2.0 * extent); };
  std::string s = fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">)"
                              "\n",
                              W, H, W, H);
  s += fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)"
                   "\n",
                   W, H);
  s += fmt::format(R"(<text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">clusters (k={})</text>)"
                   "\n",
                   W / 2, rep.assignment.k);
  s += fmt::format(R"(<line x1="{}" y1="{:.2f}" x2="{}" y2="{:.2f}" stroke="#bbbbbb"/>)"
                   "\n",
                   M, py(0.0), W - M, py(0.0));
  s += fmt::format(R"(<line x1="{:.2f}" y1="{}" x2="{:.2f}" y2="{}" stroke="#bbbbbb"/>)"
                   "\n",
                   px(0.0), M, px(0.0), H - M);
  for (std::size_t i = 0; i < rep.features.size(); ++i) {
    const auto& f = rep.features[i];
    const int label = rep.assignment.labels[i];
    const double x = px(f.dx);
    const double y = py(f.dy);
    s += fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="4" fill="{}"><title>pid {} label {}</title></circle>)"
                     "\n",
                     x, y, detail::kPalette[static_cast<std::size_t>(label) % detail::kPalette.size()], rep.pids[i], label);
    // Heading tick.
    s += fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="1"/>)"
                     "\n",
                     x, y, x + 9.0 * f.sin_t, y - 9.0 * f.cos_t,
                     detail::kPalette[static_cast<std::size_t>(label) % detail::kPalette.size()]);
  }
  s += fmt::format(R"(<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">east / sigma_x</text>)"
                   "\n",
                   W / 2, H - 10);
  s += "</svg>\n";
  return s;
}

/// Writes silhouette.svg and clusters.svg into `dir`.
inline void emit_plots(const RunReport& report, const std::filesystem::path& dir) {
  if (!report.stage2) throw Error(ErrorKind::MissingStage, "plots need the clustering stage");
  std::filesystem::create_directories(dir);
  detail::write_text(dir / "silhouette.svg", silhouette_svg(report.stage2->silhouette));
  detail::write_text(dir / "clusters.svg", clusters_svg(*report.stage2));
}

}  // namespace triselect
