#pragma once

// Resampling and intensity helpers for 8-bit rasters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "msface/error.hpp"
#include "msface/image.hpp"

namespace msface {

/// Area-average resampling: each output pixel is the coverage-weighted mean
/// of the source pixels under its footprint. Used for both down- and
/// up-scaling so training windows and the detection pyramid agree.
template <class Band>
Raster<std::uint8_t, Band> resize_area(const Raster<std::uint8_t, Band>& src,
                                       int w, int h) {
  require(w > 0 && h > 0 && !src.pixels.empty(), "resize to an empty image");
  const double sx = double(src.width) / w, sy = double(src.height) / h;
  // Per-axis footprints: list of (source index, weight).
  auto spans = [](int n_out, int n_src, double s) {
    std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      const double a = o * s, b = (o + 1) * s;
      for (int i = static_cast<int>(std::floor(a)); i < std::ceil(b) && i < n_src; ++i) {
        const double wgt = std::min<double>(b, i + 1) - std::max<double>(a, i);
        if (wgt > 1e-12) out[static_cast<std::size_t>(o)].emplace_back(i, wgt / s);
      }
    }
    return out;
  };
  const auto xs = spans(w, src.width, sx);
  const auto ys = spans(h, src.height, sy);
  Raster<std::uint8_t, Band> out(w, h, 0, src.timestamp_us);
  std::vector<double> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::fill(row.begin(), row.end(), 0.0);
    for (const auto& [sy_i, wy] : ys[static_cast<std::size_t>(y)])
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (const auto& [sx_i, wx] : xs[static_cast<std::size_t>(x)])
          acc += wx * src.at(sx_i, sy_i);
        row[static_cast<std::size_t>(x)] += wy * acc;
      }
    for (int x = 0; x < w; ++x)
      out.at(x, y) = static_cast<std::uint8_t>(
          std::clamp(std::lround(row[static_cast<std::size_t>(x)]), 0L, 255L));
  }
  return out;
}

/// Bilinear resampling with pixel centers aligned.
template <class Band>
Raster<std::uint8_t, Band> resize_bilinear(const Raster<std::uint8_t, Band>& src,
                                           int w, int h) {
  require(w > 0 && h > 0 && !src.pixels.empty(), "resize to an empty image");
  Raster<std::uint8_t, Band> out(w, h, 0, src.timestamp_us);
  const double sx = double(src.width) / w, sy = double(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - x0;
      const double v = (1 - ty) * ((1 - tx) * src.at(x0, y0) + tx * src.at(x1, y0)) +
                       ty * ((1 - tx) * src.at(x0, y1) + tx * src.at(x1, y1));
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

/// Histogram equalization through the normalized cumulative histogram.
/// A constant image is returned unchanged.
template <class Band>
Raster<std::uint8_t, Band> equalize_hist(const Raster<std::uint8_t, Band>& src) {
  std::array<std::size_t, 256> hist{};
  for (const auto p : src.pixels) ++hist[p];
  std::size_t cdf_min = 0, total = src.pixels.size();
  for (const auto c : hist)
    if (c) {
      cdf_min = c;
      break;
    }
  if (total == 0 || cdf_min == total) return src;
  std::array<std::uint8_t, 256> lut{};
  std::size_t cdf = 0;
  for (int i = 0; i < 256; ++i) {
    cdf += hist[static_cast<std::size_t>(i)];
    const double v = cdf <= cdf_min ? 0.0
                                    : 255.0 * double(cdf - cdf_min) / double(total - cdf_min);
    lut[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v));
  }
  auto out = src;
  for (auto& p : out.pixels) p = lut[p];
  return out;
}

/// Copies `src` into `dst` with its top-left corner at (x, y), clipped.
template <class Band>
void paste(Raster<std::uint8_t, Band>& dst, const Raster<std::uint8_t, Band>& src,
           int x, int y) {
  for (int v = 0; v < src.height; ++v)
    for (int u = 0; u < src.width; ++u)
      if (dst.in_bounds(x + u, y + v)) dst.at(x + u, y + v) = src.at(u, v);
}

}  // namespace msface
