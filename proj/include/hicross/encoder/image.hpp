#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "hicross/numerics/tensor.hpp"

namespace hicross::encoder {

/// Row-major image with values in [0, 1]; channel-interleaved when channels == 3.
struct ImageGrid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  ImageGrid() = default;
  ImageGrid(std::size_t w, std::size_t h, std::size_t c = 1, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {
    if (c != 1 && c != 3) throw std::invalid_argument("ImageGrid channels must be 1 or 3");
  }

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

/// Bilinear resize to side x side. Sample positions use corner alignment, so
/// the four corner pixels are preserved and a same-size resize is a copy.
inline ImageGrid resize(const ImageGrid& img, std::size_t side) {
  if (img.width == 0 || img.height == 0) throw std::invalid_argument("resize: zero-area input image");
  if (side == 0) throw std::invalid_argument("resize: target side must be positive");
  if (img.width == side && img.height == side) return img;
  ImageGrid out(side, side, img.channels);
  auto src_coord = [side](std::size_t dst, std::size_t in) {
    return side == 1 ? 0.0 : static_cast<double>(dst) * static_cast<double>(in - 1) / static_cast<double>(side - 1);
  };
  for (std::size_t y = 0; y < side; ++y) {
    const double sy = src_coord(y, img.height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < side; ++x) {
      const double sx = src_coord(x, img.width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - fx) + (fx > 0.0 ? img.at(x1, y0, c) * fx : 0.0);
        const double bot = img.at(x0, y1, c) * (1.0 - fx) + (fx > 0.0 ? img.at(x1, y1, c) * fx : 0.0);
        out.at(x, y, c) = fy > 0.0 ? top * (1.0 - fy) + bot * fy : top;
      }
    }
  }
  return out;
}

/// Raw patch tokens: length = (H/patch)*(W/patch), dim = patch*patch*channels.
template <class T>
struct TokenSequence {
  Tensor<T> tokens;  // [length, dim]

  std::size_t length() const { return tokens.rows(); }
  std::size_t dim() const { return tokens.cols(); }
};

/// Splits an image into non-overlapping patches, top-left first, row-major;
/// within a patch pixels are row-major with channels interleaved.
template <class T = double>
TokenSequence<T> patchify(const ImageGrid& img, std::size_t patch) {
  if (patch == 0 || img.width % patch != 0 || img.height % patch != 0)
    throw DimensionError("patchify: patch " + std::to_string(patch) + " does not divide image " +
                         std::to_string(img.width) + "x" + std::to_string(img.height));
  const std::size_t gx = img.width / patch, gy = img.height / patch;
  const std::size_t dim = patch * patch * img.channels;
  Tensor<T> tok({gx * gy, dim});
  for (std::size_t py = 0; py < gy; ++py)
    for (std::size_t px = 0; px < gx; ++px) {
      T* dst = tok.ptr() + (py * gx + px) * dim;
      std::size_t o = 0;
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          for (std::size_t c = 0; c < img.channels; ++c)
            dst[o++] = static_cast<T>(img.at(px * patch + x, py * patch + y, c));
    }
  return {std::move(tok)};
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Binary PGM (P5) or PPM (P6), 8-bit.
inline void write_pnm(const ImageGrid& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) os.put(static_cast<char>(to_byte(v)));
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline ImageGrid read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6" && magic != "P2")
    throw std::runtime_error(path + ": unsupported PNM magic '" + magic + "'");
  auto next_int = [&]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return std::stoi(tok);
    }
    throw std::runtime_error(path + ": truncated PNM header");
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255) throw std::runtime_error(path + ": bad PNM header");
  const std::size_t ch = magic == "P6" ? 3 : 1;
  ImageGrid img(static_cast<std::size_t>(w), static_cast<std::size_t>(h), ch);
  if (magic == "P2") {
    for (auto& v : img.pixels) v = static_cast<double>(next_int()) / maxv;
  } else {
    is.get();
    for (auto& v : img.pixels) {
      const int c = is.get();
      if (c == EOF) throw std::runtime_error(path + ": truncated PNM data");
      v = static_cast<double>(c) / maxv;
    }
  }
  return img;
}

inline void write_png(const ImageGrid& img, const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng init failed for " + path);
  std::vector<std::uint8_t> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels[i]);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng write failed for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) png_write_row(png, bytes.data() + y * img.width * img.channels);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline ImageGrid read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng init failed for " + path);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read failed for " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_expand(png);
  png_read_update_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const auto ch = png_get_channels(png, info);
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": unsupported PNG channel count");
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * ch);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = bytes.data() + y * w * ch;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  ImageGrid img(w, h, ch);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
  return img;
}

/// Loads .png, or any of P2/P5/P6 otherwise.
inline ImageGrid load_image(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0) return read_png(path);
  return read_pnm(path);
}

}  // namespace hicross::encoder
