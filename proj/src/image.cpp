/* Copyright 2026 The xft Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "xft/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <vector>

#include "xft/autodiff.hpp"
#include "xft/error.hpp"
#include "xft/kernels.hpp"

namespace xft {
namespace image {

void check_rgb(const Tensor& img, const std::string& what) {
  if (img.rank() != 3 || img.channels() != 3 || img.height() == 0 || img.width() == 0) {
    throw ConfigError(what + ": expected an H x W x 3 image, got " + shape_string(img.shape()));
  }
}

ImageTensor resize(const ImageTensor& img, std::size_t h, std::size_t w) {
  if (img.height() == h && img.width() == w) return img;
  if (img.height() % h == 0 && img.width() % w == 0 && img.height() / h == img.width() / w) {
    return ad::area_downsample(ad::constant(img), img.height() / h).value();
  }
  return kernels::parallel::resize_bilinear(img, h, w);
}

void clamp01(ImageTensor& img) {
  for (double& v : img.storage()) v = std::clamp(v, 0.0, 1.0);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageTensor read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size())) {
    throw IoError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ImageTensor img = Tensor::hwc(h, w, 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = buffer[y * stride + x * 3 + c] / 255.0;
  return img;
}

void write_png(const std::filesystem::path& path, const ImageTensor& img) {
  check_rgb(img, "write_png");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  const std::size_t h = img.height(), w = img.width();
  std::vector<unsigned char> buffer(h * w * 3);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0));
  }
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {
constexpr char kDumpMagic[] = "XFTF64\n";
}

void write_float_dump(const std::filesystem::path& path, const Tensor& t) {
  if (t.rank() != 3) throw ConfigError("float dump expects an H x W x C tensor");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kDumpMagic, sizeof kDumpMagic - 1);
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(t.raw()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

Tensor read_float_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kDumpMagic - 1];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + sizeof magic, kDumpMagic)) {
    throw IoError(path.string() + " is not a float dump");
  }
  Shape shape(3);
  for (auto& d : shape) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    d = static_cast<std::size_t>(v);
  }
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw IoError("truncated float dump " + path.string());
  return t;
}

}  // namespace image

namespace synthetic {

ImageTensor shapes(std::uint64_t seed, std::size_t size) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto color = [&] { return std::array<double, 3>{unit(rng), unit(rng), unit(rng)}; };

  ImageTensor img = Tensor::hwc(size, size, 3);
  const auto bg = color();
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = 0.25 + 0.5 * bg[c];

  const double s = static_cast<double>(size);
  const int count = 3 + static_cast<int>(rng() % 3);
  for (int i = 0; i < count; ++i) {
    const auto col = color();
    const int kind = static_cast<int>(rng() % 3);
    const double cx = s * (0.2 + 0.6 * unit(rng));
    const double cy = s * (0.2 + 0.6 * unit(rng));
    const double r = s * (0.08 + 0.14 * unit(rng));
    const double aspect = 0.6 + 0.8 * unit(rng);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double px = static_cast<double>(x) + 0.5 - cx;
        const double py = static_cast<double>(y) + 0.5 - cy;
        bool inside = false;
        if (kind == 0) {
          inside = px * px + py * py <= r * r;
        } else if (kind == 1) {
          inside = std::abs(px) <= r * aspect && std::abs(py) <= r / aspect;
        } else {
          // Upward triangle with apex at (0, -r) and base at y = r.
          inside = py <= r && py >= -r && std::abs(px) <= (py + r) * 0.5 * aspect;
        }
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
      }
    }
  }
  return img;
}

}  // namespace synthetic

}  // namespace xft
