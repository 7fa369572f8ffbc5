#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msface/error.hpp"

namespace msface {

/// Axis-aligned pixel rectangle, half-open: [x, x+w) x [y, y+h).
struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  long long area() const { return empty() ? 0 : 1LL * w * h; }
  bool operator==(const Rect&) const = default;
};

inline Rect intersect(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return {};
  return {x0, y0, x1 - x0, y1 - y0};
}

inline bool contains(const Rect& outer, const Rect& inner) {
  return !inner.empty() && inner.x >= outer.x && inner.y >= outer.y &&
         inner.x + inner.w <= outer.x + outer.w &&
         inner.y + inner.h <= outer.y + outer.h;
}

/// Detection box in pixel coordinates. Fractional after box grouping.
struct DetBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
  double score = 0;

  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }
  Rect rounded() const {
    const int x0 = static_cast<int>(std::lround(x));
    const int y0 = static_cast<int>(std::lround(y));
    return {x0, y0, static_cast<int>(std::lround(x + w)) - x0,
            static_cast<int>(std::lround(y + h)) - y0};
  }
};

inline double iou(const DetBox& a, const DetBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Row-major raster in one spectral band. The tag keeps depth, gray and IR
/// frames from being mixed up at compile time even though two of them share
/// the pixel type.
template <class Pixel, class Band>
struct Raster {
  using pixel_type = Pixel;

  int width = 0;
  int height = 0;
  std::vector<Pixel> pixels;
  std::int64_t timestamp_us = 0;

  Raster() = default;
  Raster(int w, int h, Pixel fill = Pixel{}, std::int64_t ts = 0)
      : width(w), height(h), timestamp_us(ts) {
    require(w >= 0 && h >= 0, "raster dimensions must be non-negative");
    require(ts >= 0, "timestamps must be non-negative");
    pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h),
                  fill);
  }

  Pixel& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
  const Pixel& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  Rect bounds() const { return {0, 0, width, height}; }
  std::span<const Pixel> row(int y) const {
    return {pixels.data() + static_cast<std::size_t>(y) * width,
            static_cast<std::size_t>(width)};
  }
  bool operator==(const Raster&) const = default;
};

struct DepthBand {};
struct GrayBand {};
struct IrBand {};

/// 16-bit depth in millimeters, 0 marks an invalid pixel.
using DepthFrame = Raster<std::uint16_t, DepthBand>;
/// 8-bit grayscale stand-in for the RGB stream.
using GrayFrame = Raster<std::uint8_t, GrayBand>;
/// 8-bit infrared intensity.
using IrFrame = Raster<std::uint8_t, IrBand>;

/// Copies a rectangle out of a raster. The rectangle must lie inside.
template <class P, class B>
Raster<P, B> crop(const Raster<P, B>& src, const Rect& r) {
  require(contains(src.bounds(), r), "crop rectangle outside the frame");
  Raster<P, B> out(r.w, r.h, P{}, src.timestamp_us);
  for (int y = 0; y < r.h; ++y) {
    const auto row = src.row(r.y + y);
    std::copy_n(row.begin() + r.x, r.w, out.pixels.begin() + 1LL * y * r.w);
  }
  return out;
}

}  // namespace msface
