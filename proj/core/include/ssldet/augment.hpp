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

#include <utility>
#include <vector>

#include "ssldet/geometry.hpp"
#include "ssldet/image.hpp"
#include "ssldet/rng.hpp"

namespace ssldet {

enum class NormalizeMode { Equalize, MinMax };

struct Range {
  double lo = 0, hi = 0;
};

struct AugmentSpec {
  Range crop_scale{0.2, 1.0};
  double flip_prob = 0.5;
  Range blur_sigma{0.1, 2.0};
  int blur_kernel = 21;
  Range noise_sigma_frac{0.125, 0.25};
  NormalizeMode normalize = NormalizeMode::Equalize;

  void validate() const;
};

/// Histogram equalization over 256 bins: each pixel maps to the fraction of
/// pixels whose bin is at most its own. MinMax stretches to [0,1] instead.
ImageGrid hist_normalize(const ImageGrid& img, NormalizeMode mode = NormalizeMode::Equalize);

/// Bilinear sample with edge replication; (x,y) in pixel-index coordinates.
double sample_bilinear(const ImageGrid& img, double x, double y);

/// Crops the square [x0,x0+side) x [y0,y0+side) and resizes it back to the input size.
ImageGrid crop_resize(const ImageGrid& img, double x0, double y0, double side);

ImageGrid random_crop_resize(const ImageGrid& img, const AugmentSpec& spec, Rng& rng);

ImageGrid hflip(const ImageGrid& img);
Box hflip_box(const Box& b, double width);

struct Flipped {
  ImageGrid image;
  std::vector<Box> boxes;
  bool flipped = false;
};

/// Mirrors the image (and boxes) about the vertical axis with probability `prob`.
Flipped random_hflip(const ImageGrid& img, std::vector<Box> boxes, double prob, Rng& rng);

/// Normalized 1-D Gaussian weights of odd length `size`.
std::vector<double> gaussian_kernel(double sigma, int size);

/// Separable Gaussian blur with edge replication. Kernels longer than the
/// image are shrunk to the largest odd size that fits.
ImageGrid gaussian_blur(const ImageGrid& img, double sigma, int kernel);

/// Adds N(0, (sigma_frac*mean)^2) per pixel and clamps to [0,1].
ImageGrid gaussian_noise(const ImageGrid& img, double sigma_frac, Rng& rng);

/// crop-resize -> flip -> blur -> noise, applied to an already normalized image.
ImageGrid ssl_view(const ImageGrid& normalized, const AugmentSpec& spec, Rng& rng);

/// Two independent views of the histogram-normalized input.
std::pair<ImageGrid, ImageGrid> ssl_view_pair(const ImageGrid& img, const AugmentSpec& spec, Rng& rng);

}  // namespace ssldet
