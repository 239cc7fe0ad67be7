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

#include "xft/correspondence.hpp"

#include <fstream>
#include <vector>

#include "xft/error.hpp"

namespace xft::correspondence {

CorrelationMatrix correlation_matrix(const encoder::CentralizedFeatureVolume& fs,
                                     const encoder::CentralizedFeatureVolume& ft) {
  if (fs.data.rank() != 3 || ft.data.rank() != 3) {
    throw ConfigError("correlation_matrix: feature volumes must be H x W x C");
  }
  if (fs.data.channels() != ft.data.channels()) {
    throw ConfigError("correlation_matrix: source has " + std::to_string(fs.data.channels()) +
                      " channels, target has " + std::to_string(ft.data.channels()));
  }
  if (!fs.data.all_finite() || !ft.data.all_finite()) {
    throw NumericError("correlation_matrix: non-finite features");
  }
  Tensor m = ad::cosine_matrix(ad::constant(fs.data), ad::constant(ft.data)).value();
  return {std::move(m),
          {fs.data.height(), fs.data.width()},
          {ft.data.height(), ft.data.width()}};
}

ad::Var warp(const ad::Var& target, const ad::Var& m, double alpha, SpatialShape source) {
  if (!(alpha > 0)) throw ConfigError("warp: alpha must be positive");
  return ad::softmax_aggregate(m, alpha, target, source.height, source.width);
}

WarpedImage warp(const ImageTensor& target, const CorrelationMatrix& m, double alpha) {
  if (target.rank() != 3 || target.height() != m.target.height ||
      target.width() != m.target.width) {
    throw ConfigError("warp: target image " + shape_string(target.shape()) +
                      " does not match the correlation target shape " +
                      std::to_string(m.target.height) + "x" + std::to_string(m.target.width));
  }
  return {warp(ad::constant(target), ad::constant(m.data), alpha, m.source).value(), alpha};
}

void dump_correlation(const std::filesystem::path& stem, const CorrelationMatrix& m,
                      double alpha) {
  std::filesystem::path bin = stem;
  bin += ".f32";
  std::filesystem::path txt = stem;
  txt += ".txt";
  std::vector<float> values(m.data.storage().begin(), m.data.storage().end());
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write " + bin.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  std::ofstream meta(txt);
  if (!meta) throw IoError("cannot write " + txt.string());
  meta << "rows " << m.data.dim(0) << "\n"
       << "cols " << m.data.dim(1) << "\n"
       << "source " << m.source.height << " " << m.source.width << "\n"
       << "target " << m.target.height << " " << m.target.width << "\n"
       << "alpha " << alpha << "\n"
       << "dtype float32 row-major\n";
}

}  // namespace xft::correspondence
