#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/image_io.hpp"

namespace uarpo {

enum class Style : uint8_t { line_thin, line_thick, filled_area };

inline const char* style_name(Style s) {
  switch (s) {
    case Style::line_thin: return "line-thin";
    case Style::line_thick: return "line-thick";
    case Style::filled_area: return "filled-area";
  }
  return "?";
}

inline Style style_from(const std::string& s) {
  if (s == "line-thin") return Style::line_thin;
  if (s == "line-thick") return Style::line_thick;
  if (s == "filled-area") return Style::filled_area;
  throw ConfigError("unknown style '" + s + "' (expected line-thin|line-thick|filled-area)");
}

struct RenderOptions {
  int height = 64;
  int width = 96;
  bool with_volume = false;          // bottom-strip bars from |log increments|
  bool with_moving_average = false;  // gray MA(8) overlay
};

namespace detail {

// Column-sampled polyline: every x column between the margins gets exactly
// one interpolated value, and vertical gaps to the previous column are
// filled so the trace stays connected.
inline void draw_trace(Image& im, std::span<const float> win, int y_lo, int y_hi, double vmin,
                       double vmax, uint8_t shade, int half_thickness, bool fill_below,
                       uint8_t fill_shade) {
  const int x_lo = 2, x_hi = im.width - 3;
  const int n = static_cast<int>(win.size());
  auto y_of = [&](double v) -> int {
    if (vmax <= vmin) return static_cast<int>(std::lround((y_lo + y_hi) / 2.0));
    const double t = (vmax - v) / (vmax - vmin);
    return static_cast<int>(std::lround(y_lo + t * (y_hi - y_lo)));
  };
  auto value_at = [&](int x) -> double {
    if (n == 1) return win[0];
    const double fi = static_cast<double>(x - x_lo) * (n - 1) / (x_hi - x_lo);
    const int i0 = std::min(n - 2, static_cast<int>(fi));
    const double frac = fi - i0;
    return (1.0 - frac) * win[static_cast<size_t>(i0)] + frac * win[static_cast<size_t>(i0 + 1)];
  };
  auto stamp = [&](int x, int y) {
    for (int d = -half_thickness; d <= half_thickness; ++d) {
      const int yy = std::clamp(y + d, y_lo, y_hi);
      im.at(yy, x) = std::min(im.at(yy, x), shade);
    }
  };
  int prev_y = 0;
  for (int x = x_lo; x <= x_hi; ++x) {
    const int y = y_of(value_at(x));
    if (fill_below)
      for (int yy = y; yy <= y_hi; ++yy) im.at(yy, x) = std::min(im.at(yy, x), fill_shade);
    stamp(x, y);
    if (x > x_lo) {
      const int a = std::min(prev_y, y), b = std::max(prev_y, y);
      for (int yy = a; yy <= b; ++yy) stamp(x, yy);
    }
    prev_y = y;
  }
}

}  // namespace detail

// Min-max scaled chart of the window with a 2-pixel margin. An all-equal
// window renders as a horizontal mid-height line. Pure function of
// (window, style, options).
inline Image render_chart(std::span<const float> window, Style style, const RenderOptions& opt = {}) {
  if (window.empty()) throw ConfigError("render_chart: empty window");
  if (opt.height < 16 || opt.width < 16)
    throw ConfigError("render_chart: image must be at least 16x16");
  Image im = Image::blank(opt.height, opt.width);

  const int vol_rows = opt.with_volume ? opt.height / 4 : 0;
  const int y_lo = 2;
  const int y_hi = opt.height - 3 - (vol_rows > 0 ? vol_rows + 2 : 0);

  double vmin = window[0], vmax = window[0];
  for (float v : window) {
    vmin = std::min(vmin, static_cast<double>(v));
    vmax = std::max(vmax, static_cast<double>(v));
  }

  if (opt.with_moving_average && window.size() >= 2) {
    const int w = std::min<int>(8, static_cast<int>(window.size()));
    std::vector<float> ma(window.size());
    double acc = 0.0;
    for (size_t i = 0; i < window.size(); ++i) {
      acc += window[i];
      if (i >= static_cast<size_t>(w)) acc -= window[i - static_cast<size_t>(w)];
      ma[i] = static_cast<float>(acc / std::min<size_t>(i + 1, static_cast<size_t>(w)));
    }
    detail::draw_trace(im, ma, y_lo, y_hi, vmin, vmax, 120, 0, false, 255);
  }

  const int half = style == Style::line_thick ? 1 : 0;
  const bool fill = style == Style::filled_area;
  detail::draw_trace(im, window, y_lo, y_hi, vmin, vmax, 0, half, fill, 208);

  if (vol_rows > 0 && window.size() >= 2) {
    const int vy_hi = opt.height - 3;
    const int vy_lo = vy_hi - vol_rows + 1;
    std::vector<double> vol(window.size(), 0.0);
    double vol_max = 0.0;
    for (size_t i = 1; i < window.size(); ++i) {
      vol[i] = std::abs(std::log(static_cast<double>(window[i])) -
                        std::log(static_cast<double>(window[i - 1])));
      vol_max = std::max(vol_max, vol[i]);
    }
    const int x_lo = 2, x_hi = opt.width - 3;
    const int n = static_cast<int>(window.size());
    for (int x = x_lo; x <= x_hi; ++x) {
      const size_t idx = static_cast<size_t>(
          std::lround(static_cast<double>(x - x_lo) * (n - 1) / (x_hi - x_lo)));
      const double h = vol_max > 0.0 ? vol[idx] / vol_max : 0.0;
      const int top = vy_hi - static_cast<int>(std::lround(h * (vy_hi - vy_lo)));
      for (int y = top; y <= vy_hi; ++y) im.at(y, x) = std::min<uint8_t>(im.at(y, x), 160);
    }
  }
  return im;
}

}  // namespace uarpo
