#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "uarpo/csv.hpp"
#include "uarpo/errors.hpp"
#include "uarpo/image_io.hpp"

namespace uarpo {

namespace detail {

// 5x7 bitmap font, one byte per row, low 5 bits used. Lowercase maps to
// uppercase; anything unknown renders as a small box.
inline const uint8_t* glyph5x7(char c) {
  static const uint8_t digits[10][7] = {
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};
  static const uint8_t letters[26][7] = {
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}};
  static const uint8_t dot[7] = {0, 0, 0, 0, 0, 0x0C, 0x0C};
  static const uint8_t dash[7] = {0, 0, 0, 0x1F, 0, 0, 0};
  static const uint8_t under[7] = {0, 0, 0, 0, 0, 0, 0x1F};
  static const uint8_t percent[7] = {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03};
  static const uint8_t slash[7] = {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10};
  static const uint8_t colon[7] = {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0};
  static const uint8_t plus[7] = {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0};
  static const uint8_t space[7] = {0, 0, 0, 0, 0, 0, 0};
  static const uint8_t box[7] = {0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F};
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c >= 'A' && c <= 'Z') return letters[c - 'A'];
  if (c >= 'a' && c <= 'z') return letters[c - 'a'];
  switch (c) {
    case '.': return dot;
    case '-': return dash;
    case '_': return under;
    case '%': return percent;
    case '/': return slash;
    case ':': return colon;
    case '+': return plus;
    case ' ': return space;
  }
  return box;
}

struct Color {
  uint8_t r, g, b;
};

inline const Color* palette() {
  static const Color p[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                            {214, 39, 40},  {148, 103, 189}, {90, 90, 90}};
  return p;
}
inline constexpr int kPaletteSize = 6;

struct Canvas {
  RgbImage im;

  explicit Canvas(int h, int w) : im(RgbImage::blank(h, w)) {}

  void text(int row, int col, const std::string& s, Color c) {
    for (size_t i = 0; i < s.size(); ++i) {
      const uint8_t* g = glyph5x7(s[i]);
      const int base_c = col + static_cast<int>(i) * 6;
      for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 5; ++x)
          if (g[y] & (1 << (4 - x))) im.set(row + y, base_c + x, c.r, c.g, c.b);
    }
  }

  void line(int r0, int c0, int r1, int c1, Color c) {
    const int dr = std::abs(r1 - r0), dc = std::abs(c1 - c0);
    const int sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
    int err = (dc > dr ? dc : -dr) / 2;
    for (;;) {
      im.set(r0, c0, c.r, c.g, c.b);
      if (r0 == r1 && c0 == c1) break;
      const int e2 = err;
      if (e2 > -dc) {
        err -= dr;
        c0 += sc;
      }
      if (e2 < dr) {
        err += dc;
        r0 += sr;
      }
    }
  }

  void hline(int row, int c0, int c1, Color c) { line(row, c0, row, c1, c); }
  void vline(int col, int r0, int r1, Color c) { line(r0, col, r1, col, c); }
};

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN marks a gap
};

// Deterministic raster line plot (binary PPM): axes with tick labels, one
// polyline per series, legend in the top right.
inline void render_line_plot(const std::filesystem::path& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             const std::vector<PlotSeries>& series, int height = 320,
                             int width = 480) {
  using detail::Canvas;
  using detail::Color;
  const Color black{0, 0, 0};
  const Color gray{200, 200, 200};

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  if (!any) throw ConfigError("plot: no finite data points");
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) {
    ymax = ymin + (ymin == 0.0 ? 1.0 : std::abs(ymin) * 0.1);
  } else {
    const double pad = (ymax - ymin) * 0.05;
    ymin -= pad;
    ymax += pad;
  }

  const int left = 56, right = width - 16, top = 24, bottom = height - 32;
  Canvas cv(height, width);
  cv.text(8, std::max(0, (width - static_cast<int>(title.size()) * 6) / 2), title, black);

  auto to_col = [&](double x) {
    return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
  };
  auto to_row = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  };

  for (int t = 0; t <= 4; ++t) {
    const double y = ymin + (ymax - ymin) * t / 4.0;
    const int row = to_row(y);
    cv.hline(row, left, right, gray);
    const std::string lab = detail::tick_label(y);
    cv.text(row - 3, std::max(0, left - 4 - static_cast<int>(lab.size()) * 6), lab, black);
  }
  for (int t = 0; t <= 4; ++t) {
    const double x = xmin + (xmax - xmin) * t / 4.0;
    const int col = to_col(x);
    cv.vline(col, top, bottom, gray);
    const std::string lab = detail::tick_label(x);
    cv.text(bottom + 4, std::max(0, col - static_cast<int>(lab.size()) * 3), lab, black);
  }
  cv.hline(bottom, left, right, black);
  cv.vline(left, top, bottom, black);
  cv.text(bottom + 14, std::max(0, (left + right) / 2 - static_cast<int>(x_label.size()) * 3),
          x_label, black);
  cv.text(top - 12, 4, y_label, black);

  for (size_t s = 0; s < series.size(); ++s) {
    const Color c = detail::palette()[s % detail::kPaletteSize];
    bool have_prev = false;
    int pr = 0, pc = 0;
    for (size_t i = 0; i < series[s].x.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) {
        have_prev = false;
        continue;
      }
      const int row = to_row(series[s].y[i]);
      const int col = to_col(series[s].x[i]);
      if (have_prev) cv.line(pr, pc, row, col, c);
      have_prev = true;
      pr = row;
      pc = col;
    }
    cv.text(top + 2 + static_cast<int>(s) * 10,
            right - 8 - static_cast<int>(series[s].name.size()) * 6, series[s].name, c);
  }
  write_ppm(path, cv.im);
}

namespace detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw ConfigError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  int row_no = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++row_no;
    auto fields = split_csv_line(line);
    if (fields.size() != t.header.size())
      throw ConfigError(path.string() + ": row " + std::to_string(row_no) + ": expected " +
                        std::to_string(t.header.size()) + " columns, got " +
                        std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.rows.empty()) throw ConfigError(path.string() + ": no data rows");
  return t;
}

inline PlotSeries column_series(const CsvTable& t, const std::filesystem::path& path, int x_ix,
                                int col_ix) {
  PlotSeries s;
  s.name = t.header[static_cast<size_t>(col_ix)];
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& xs = t.rows[r][static_cast<size_t>(x_ix)];
    const std::string& ys = t.rows[r][static_cast<size_t>(col_ix)];
    double x = 0, y = 0;
    if (!parse_number(xs, &x))
      throw ConfigError(path.string() + ": row " + std::to_string(r + 1) + ": bad x value '" + xs +
                        "'");
    if (ys.empty()) {
      y = std::numeric_limits<double>::quiet_NaN();
    } else if (!parse_number(ys, &y)) {
      throw ConfigError(path.string() + ": row " + std::to_string(r + 1) + ": bad value '" + ys +
                        "' in column " + s.name);
    }
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return s;
}

}  // namespace detail

// Plots from a metrics or comparison CSV. Metrics files produce reward,
// loss and accuracy plots; any other step-keyed CSV plots all its columns
// into one image. Returns the files written.
inline std::vector<std::filesystem::path> plot_csv(const std::filesystem::path& csv_path,
                                                   const std::filesystem::path& out_dir) {
  const detail::CsvTable t = detail::read_csv_table(csv_path);
  auto col_ix = [&](const std::string& name) -> int {
    for (size_t i = 0; i < t.header.size(); ++i)
      if (t.header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int step_ix = col_ix("step");
  if (step_ix < 0) throw ConfigError(csv_path.string() + ": missing column 'step'");

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& file, const std::string& title,
                  const std::vector<std::string>& cols, const std::string& ylab) {
    std::vector<PlotSeries> series;
    for (const auto& c : cols) {
      const int ix = col_ix(c);
      if (ix >= 0) series.push_back(detail::column_series(t, csv_path, step_ix, ix));
    }
    if (series.empty()) return;
    const auto path = out_dir / file;
    render_line_plot(path, title, "STEP", ylab, series);
    written.push_back(path);
  };

  if (col_ix("r_total") >= 0) {
    emit("plot_rewards.ppm", "REWARD COMPONENTS", {"r_acc", "r_fmt", "r_len", "r_total"}, "REWARD");
    emit("plot_loss.ppm", "TRAINING LOSS", {"loss"}, "LOSS");
    emit("plot_accuracy.ppm", "TRAIN ACCURACY", {"train_acc", "fmt_valid_frac"}, "FRACTION");
  } else {
    std::vector<std::string> cols;
    for (const auto& h : t.header)
      if (h != "step" && h != "iteration") cols.push_back(h);
    emit("plot_compare.ppm", "ACCURACY VS STEP", cols, "VALUE");
  }
  if (written.empty()) throw ConfigError(csv_path.string() + ": nothing to plot");
  return written;
}

}  // namespace uarpo
