// Copyright 2026 The ssldet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <vector>

namespace ssldet {

/// Single-channel raster, row-major, intensities in [0,1].
struct ImageGrid {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  ImageGrid() = default;
  ImageGrid(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  /// Edge-replicating accessor.
  double at_clamped(int x, int y) const {
    return at(x < 0 ? 0 : (x >= width ? width - 1 : x), y < 0 ? 0 : (y >= height ? height - 1 : y));
  }

  std::size_t size() const { return pixels.size(); }
  double mean() const;

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;
};

/// Reads a binary 8-bit PGM (P5). Intensities are mapped to [0,1] by /255.
ImageGrid read_pgm(const std::filesystem::path& path);

/// Writes a binary 8-bit PGM, quantizing intensities by round(v*255).
void write_pgm(const ImageGrid& img, const std::filesystem::path& path);

/// Quantizes to the 8-bit grid that PGM storage imposes.
ImageGrid quantize_8bit(const ImageGrid& img);

}  // namespace ssldet
