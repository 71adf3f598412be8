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

#include "ssldet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "ssldet/error.hpp"

namespace ssldet {

ImageGrid::ImageGrid(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
  SSLDET_CHECK(w > 0 && h > 0, DataError, "ImageGrid: dimensions must be positive");
}

double ImageGrid::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

namespace {

// PGM header tokens may be separated by whitespace and interleaved with comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

ImageGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path.string() + "'");
  if (next_token(in) != "P5") throw DataError("'" + path.string() + "' is not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw DataError("'" + path.string() + "': malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw DataError("'" + path.string() + "': only 8-bit PGM with positive dimensions is supported");
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw DataError("'" + path.string() + "': truncated pixel data");
  }
  ImageGrid img(w, h);
  std::transform(raw.begin(), raw.end(), img.pixels.begin(), [](unsigned char v) { return v / 255.0; });
  return img;
}

void write_pgm(const ImageGrid& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path.string() + "'");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), raw.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing image '" + path.string() + "'");
}

ImageGrid quantize_8bit(const ImageGrid& img) {
  ImageGrid q = img;
  for (double& v : q.pixels) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return q;
}

}  // namespace ssldet
