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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xft/tensor.hpp"

namespace xft {

// H x W x 3 tensor with values in [0, 1].
using ImageTensor = Tensor;

namespace image {

// Throws ConfigError unless img is H x W x 3.
void check_rgb(const Tensor& img, const std::string& what);

// Area averaging for integer downscale factors, bilinear otherwise.
ImageTensor resize(const ImageTensor& img, std::size_t h, std::size_t w);

void clamp01(ImageTensor& img);

// 8-bit PNG. Grey, grey+alpha and RGBA inputs are converted to RGB.
ImageTensor read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageTensor& img);

// Lossless dump: ASCII magic "XFTF64\n", then uint64 h, w, c (little endian)
// followed by h*w*c float64 values in row-major HWC order.
void write_float_dump(const std::filesystem::path& path, const Tensor& t);
Tensor read_float_dump(const std::filesystem::path& path);

}  // namespace image

namespace synthetic {

// Seeded colored-shapes scene: flat background plus a few discs, rectangles
// and triangles with distinct colors.
ImageTensor shapes(std::uint64_t seed, std::size_t size);

// The bundled source/target pair and 8-image reference set.
inline constexpr std::uint64_t kPairSourceSeed = 11;
inline constexpr std::uint64_t kPairTargetSeed = 23;
inline constexpr std::uint64_t kSetFirstSeed = 100;
inline constexpr std::size_t kSetSize = 8;

}  // namespace synthetic

}  // namespace xft
