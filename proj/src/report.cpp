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

#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "xft/error.hpp"
#include "xft/pipeline.hpp"

namespace fs = std::filesystem;

namespace xft::pipeline {

namespace {

using Glyph = std::array<const char*, 7>;

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> f = {
      {'A', {" ### ", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'B', {"#### ", "#   #", "#   #", "#### ", "#   #", "#   #", "#### "}},
      {'C', {" ### ", "#   #", "#    ", "#    ", "#    ", "#   #", " ### "}},
      {'D', {"#### ", "#   #", "#   #", "#   #", "#   #", "#   #", "#### "}},
      {'E', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#####"}},
      {'F', {"#####", "#    ", "#    ", "#### ", "#    ", "#    ", "#    "}},
      {'G', {" ### ", "#   #", "#    ", "# ###", "#   #", "#   #", " ####"}},
      {'H', {"#   #", "#   #", "#   #", "#####", "#   #", "#   #", "#   #"}},
      {'I', {" ### ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'J', {"  ###", "   # ", "   # ", "   # ", "   # ", "#  # ", " ##  "}},
      {'K', {"#   #", "#  # ", "# #  ", "##   ", "# #  ", "#  # ", "#   #"}},
      {'L', {"#    ", "#    ", "#    ", "#    ", "#    ", "#    ", "#####"}},
      {'M', {"#   #", "## ##", "# # #", "# # #", "#   #", "#   #", "#   #"}},
      {'N', {"#   #", "#   #", "##  #", "# # #", "#  ##", "#   #", "#   #"}},
      {'O', {" ### ", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'P', {"#### ", "#   #", "#   #", "#### ", "#    ", "#    ", "#    "}},
      {'Q', {" ### ", "#   #", "#   #", "#   #", "# # #", "#  # ", " ## #"}},
      {'R', {"#### ", "#   #", "#   #", "#### ", "# #  ", "#  # ", "#   #"}},
      {'S', {" ####", "#    ", "#    ", " ### ", "    #", "    #", "#### "}},
      {'T', {"#####", "  #  ", "  #  ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'U', {"#   #", "#   #", "#   #", "#   #", "#   #", "#   #", " ### "}},
      {'V', {"#   #", "#   #", "#   #", "#   #", "#   #", " # # ", "  #  "}},
      {'W', {"#   #", "#   #", "#   #", "# # #", "# # #", "# # #", " # # "}},
      {'X', {"#   #", "#   #", " # # ", "  #  ", " # # ", "#   #", "#   #"}},
      {'Y', {"#   #", "#   #", " # # ", "  #  ", "  #  ", "  #  ", "  #  "}},
      {'Z', {"#####", "    #", "   # ", "  #  ", " #   ", "#    ", "#####"}},
      {'0', {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "}},
      {'1', {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "}},
      {'2', {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"}},
      {'3', {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "}},
      {'4', {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "}},
      {'5', {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "}},
      {'6', {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "}},
      {'7', {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "}},
      {'8', {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "}},
      {'9', {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "}},
      {'x', {"     ", "     ", "#   #", " # # ", "  #  ", " # # ", "#   #"}},
      {'-', {"     ", "     ", "     ", "#####", "     ", "     ", "     "}},
      {'.', {"     ", "     ", "     ", "     ", "     ", " ##  ", " ##  "}},
      {':', {"     ", " ##  ", " ##  ", "     ", " ##  ", " ##  ", "     "}},
  };
  return f;
}

// Nearest-neighbour for integer upscales keeps pixels crisp.
ImageTensor fit(const ImageTensor& img, std::size_t cell) {
  if (img.height() == cell && img.width() == cell) return img;
  if (img.height() == img.width() && cell % img.height() == 0) {
    const std::size_t k = cell / img.height();
    ImageTensor out({cell, cell, 3});
    for (std::size_t y = 0; y < cell; ++y)
      for (std::size_t x = 0; x < cell; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y / k, x / k, c);
    return out;
  }
  return image::resize(img, cell, cell);
}

}  // namespace

void draw_text(ImageTensor& canvas, std::size_t x, std::size_t y, const std::string& text,
               std::size_t scale, double value) {
  const auto& f = font();
  std::size_t cx = x;
  for (char ch : text) {
    const char key = ch == 'x' ? 'x' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (auto it = f.find(key); it != f.end()) {
      for (std::size_t r = 0; r < 7; ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
          if (it->second[r][c] != '#') continue;
          for (std::size_t dy = 0; dy < scale; ++dy) {
            for (std::size_t dx = 0; dx < scale; ++dx) {
              const std::size_t py = y + r * scale + dy, px = cx + c * scale + dx;
              if (py >= canvas.height() || px >= canvas.width()) continue;
              for (std::size_t k = 0; k < 3; ++k) canvas.at(py, px, k) = value;
            }
          }
        }
      }
    }
    cx += 6 * scale;
  }
}

GridLayout render_report(const fs::path& run_dir) {
  const std::pair<const char*, const char*> sources[] = {
      {"source", files::kSource}, {"target", files::kTarget},
      {"warped", files::kWarped}, {"final", files::kFinal}};
  std::vector<ImageTensor> images;
  GridLayout layout;
  std::size_t cell = 0;
  for (const auto& [label, file] : sources) {
    const fs::path p = run_dir / file;
    if (!fs::exists(p)) throw IoError("report: missing " + p.string());
    images.push_back(image::read_png(p));
    Panel panel;
    panel.label = label;
    panel.file = file;
    panel.height = images.back().height();
    panel.width = images.back().width();
    cell = std::max({cell, panel.height, panel.width});
    layout.panels.push_back(panel);
  }

  const std::size_t scale = std::max<std::size_t>(1, cell / 128);
  const std::size_t margin = 4 * scale, band = 11 * scale;
  layout.width = 4 * cell + 5 * margin;
  layout.height = band + cell + 2 * margin;
  ImageTensor canvas({layout.height, layout.width, 3}, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    Panel& p = layout.panels[i];
    p.cell = cell;
    p.x = margin + i * (cell + margin);
    p.y = margin + band;
    const ImageTensor shown = fit(images[i], cell);
    for (std::size_t y = 0; y < cell; ++y)
      for (std::size_t x = 0; x < cell; ++x)
        for (std::size_t c = 0; c < 3; ++c) canvas.at(p.y + y, p.x + x, c) = shown.at(y, x, c);
    std::string text = p.label + " " + std::to_string(p.width) + "x" + std::to_string(p.height);
    if (text.size() * 6 * scale > cell) text = p.label;
    draw_text(canvas, p.x, margin, text, scale);
  }
  image::write_png(run_dir / files::kGrid, canvas);

  nlohmann::json j;
  j["width"] = layout.width;
  j["height"] = layout.height;
  j["panels"] = nlohmann::json::array();
  for (const auto& p : layout.panels) {
    j["panels"].push_back({{"label", p.label}, {"file", p.file}, {"width", p.width},
                           {"height", p.height}, {"x", p.x}, {"y", p.y}, {"cell", p.cell}});
  }
  std::ofstream out(run_dir / files::kGridLayout);
  if (!out) throw IoError("cannot write " + (run_dir / files::kGridLayout).string());
  out << j.dump(2) << '\n';
  return layout;
}

}  // namespace xft::pipeline
