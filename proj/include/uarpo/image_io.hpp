#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"

namespace uarpo {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> px;  // row-major, 0 = black

  static Image blank(int h, int w, uint8_t fill = 255) {
    Image im;
    im.height = h;
    im.width = w;
    im.px.assign(static_cast<size_t>(h) * w, fill);
    return im;
  }
  uint8_t& at(int r, int c) { return px[static_cast<size_t>(r) * width + c]; }
  uint8_t at(int r, int c) const { return px[static_cast<size_t>(r) * width + c]; }
  bool operator==(const Image&) const = default;
};

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> px;  // RGB triplets

  static RgbImage blank(int h, int w, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255) {
    RgbImage im;
    im.height = h;
    im.width = w;
    im.px.resize(static_cast<size_t>(h) * w * 3);
    for (size_t i = 0; i < im.px.size(); i += 3) {
      im.px[i] = r;
      im.px[i + 1] = g;
      im.px[i + 2] = b;
    }
    return im;
  }
  void set(int r, int c, uint8_t cr, uint8_t cg, uint8_t cb) {
    if (r < 0 || r >= height || c < 0 || c >= width) return;
    const size_t i = (static_cast<size_t>(r) * width + c) * 3;
    px[i] = cr;
    px[i + 1] = cg;
    px[i + 2] = cb;
  }
};

inline void write_pgm(const std::filesystem::path& path, const Image& im) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "P5\n" << im.width << " " << im.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(im.px.data()), static_cast<std::streamsize>(im.px.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = f.get()) != EOF) {
      if (c == '#') {
        while ((c = f.get()) != EOF && c != '\n') {}
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P5") throw IoError("not a binary PGM: " + path.string());
  Image im;
  try {
    im.width = std::stoi(next_token());
    im.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw IoError("unsupported PGM maxval in " + path.string());
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header: " + path.string());
  }
  if (im.width <= 0 || im.height <= 0) throw IoError("malformed PGM dimensions: " + path.string());
  im.px.resize(static_cast<size_t>(im.width) * im.height);
  f.read(reinterpret_cast<char*>(im.px.data()), static_cast<std::streamsize>(im.px.size()));
  if (f.gcount() != static_cast<std::streamsize>(im.px.size()))
    throw IoError("truncated PGM: " + path.string());
  return im;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& im) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f << "P6\n" << im.width << " " << im.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(im.px.data()), static_cast<std::streamsize>(im.px.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace uarpo
