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

#include "ssldet/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ssldet/error.hpp"

namespace ssldet {

void AugmentSpec::validate() const {
  auto ok = [](Range r) { return r.lo > 0 && r.hi >= r.lo; };
  if (!ok(crop_scale) || crop_scale.hi > 1.0) throw ConfigError("augment: crop scale range must lie in (0,1]");
  if (!ok(blur_sigma)) throw ConfigError("augment: blur sigma range must be positive");
  if (!ok(noise_sigma_frac)) throw ConfigError("augment: noise range must be positive");
  if (flip_prob < 0 || flip_prob > 1) throw ConfigError("augment: flip probability must lie in [0,1]");
  if (blur_kernel < 1 || blur_kernel % 2 == 0) throw ConfigError("augment: blur kernel must be odd");
}

ImageGrid hist_normalize(const ImageGrid& img, NormalizeMode mode) {
  ImageGrid out = img;
  if (img.pixels.empty()) return out;
  if (mode == NormalizeMode::MinMax) {
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const double span = *hi - *lo;
    for (double& v : out.pixels) v = span > 0 ? (v - *lo) / span : 0.0;
    return out;
  }
  auto bin = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  std::array<std::size_t, 256> hist{};
  for (double v : img.pixels) ++hist[static_cast<std::size_t>(bin(v))];
  std::array<double, 256> cdf{};
  std::size_t running = 0;
  const double n = static_cast<double>(img.pixels.size());
  for (std::size_t b = 0; b < 256; ++b) {
    running += hist[b];
    cdf[b] = static_cast<double>(running) / n;
  }
  for (double& v : out.pixels) v = cdf[static_cast<std::size_t>(bin(v))];
  return out;
}

double sample_bilinear(const ImageGrid& img, double x, double y) {
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double ax = x - fx0, ay = y - fy0;
  const double top = (1 - ax) * img.at_clamped(x0, y0) + ax * img.at_clamped(x0 + 1, y0);
  const double bottom = (1 - ax) * img.at_clamped(x0, y0 + 1) + ax * img.at_clamped(x0 + 1, y0 + 1);
  return (1 - ay) * top + ay * bottom;
}

ImageGrid crop_resize(const ImageGrid& img, double x0, double y0, double side) {
  ImageGrid out(img.width, img.height);
  const double sx = side / img.width, sy = side / img.height;
  for (int y = 0; y < img.height; ++y) {
    const double src_y = y0 + (y + 0.5) * sy - 0.5;
    for (int x = 0; x < img.width; ++x) {
      const double src_x = x0 + (x + 0.5) * sx - 0.5;
      out.at(x, y) = std::clamp(sample_bilinear(img, src_x, src_y), 0.0, 1.0);
    }
  }
  return out;
}

ImageGrid random_crop_resize(const ImageGrid& img, const AugmentSpec& spec, Rng& rng) {
  const double full = std::min(img.width, img.height);
  double side = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double scale = spec.crop_scale.lo == spec.crop_scale.hi
                             ? spec.crop_scale.lo
                             : uniform(rng, spec.crop_scale.lo, spec.crop_scale.hi);
    side = std::min(full, std::sqrt(scale) * full);
    if (side >= 2.0) break;
  }
  side = std::max(side, std::min(2.0, full));
  const double x0 = img.width - side > 0 ? uniform(rng, 0.0, img.width - side) : 0.0;
  const double y0 = img.height - side > 0 ? uniform(rng, 0.0, img.height - side) : 0.0;
  return crop_resize(img, x0, y0, side);
}

ImageGrid hflip(const ImageGrid& img) {
  ImageGrid out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(img.width - 1 - x, y) = img.at(x, y);
  }
  return out;
}

Box hflip_box(const Box& b, double width) { return {width - b.x2, b.y1, width - b.x1, b.y2}; }

Flipped random_hflip(const ImageGrid& img, std::vector<Box> boxes, double prob, Rng& rng) {
  const bool flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob;
  if (!flip) return {img, std::move(boxes), false};
  for (Box& b : boxes) b = hflip_box(b, img.width);
  return {hflip(img), std::move(boxes), true};
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  if (!(sigma > 0)) throw ConfigError("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw ConfigError("gaussian_kernel: size must be odd");
  const int r = size / 2;
  std::vector<double> k(static_cast<std::size_t>(size));
  double sum = 0;
  for (int i = -r; i <= r; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

ImageGrid gaussian_blur(const ImageGrid& img, double sigma, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("gaussian_blur: kernel must be odd");
  int fit = std::min({kernel, img.width, img.height});
  if (fit % 2 == 0) --fit;
  const auto k = gaussian_kernel(sigma, fit);
  const int r = fit / 2;

  const int W = img.width, H = img.height;
  std::vector<double> line(static_cast<std::size_t>(std::max(W, H) + 2 * r));
  auto convolve = [&](std::size_t n, double* dst, std::size_t dst_stride) {
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < k.size(); ++i) acc += k[i] * line[x + i];
      dst[x * dst_stride] = acc;
    }
  };

  ImageGrid tmp(W, H);
  for (int y = 0; y < H; ++y) {
    for (int x = -r; x < W + r; ++x) line[static_cast<std::size_t>(x + r)] = img.at(std::clamp(x, 0, W - 1), y);
    convolve(static_cast<std::size_t>(W), &tmp.at(0, y), 1);
  }
  ImageGrid out(W, H);
  for (int x = 0; x < W; ++x) {
    for (int y = -r; y < H + r; ++y) line[static_cast<std::size_t>(y + r)] = tmp.at(x, std::clamp(y, 0, H - 1));
    convolve(static_cast<std::size_t>(H), &out.at(x, 0), static_cast<std::size_t>(W));
  }
  for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

ImageGrid gaussian_noise(const ImageGrid& img, double sigma_frac, Rng& rng) {
  if (!(sigma_frac > 0)) throw ConfigError("gaussian_noise: sigma fraction must be positive");
  const double sigma = sigma_frac * img.mean();
  ImageGrid out = img;
  if (!(sigma > 0)) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  return out;
}

ImageGrid ssl_view(const ImageGrid& normalized, const AugmentSpec& spec, Rng& rng) {
  ImageGrid v = random_crop_resize(normalized, spec, rng);
  v = random_hflip(v, {}, spec.flip_prob, rng).image;
  const double sigma = uniform(rng, spec.blur_sigma.lo, spec.blur_sigma.hi);
  v = gaussian_blur(v, sigma, spec.blur_kernel);
  const double frac = uniform(rng, spec.noise_sigma_frac.lo, spec.noise_sigma_frac.hi);
  return gaussian_noise(v, frac, rng);
}

std::pair<ImageGrid, ImageGrid> ssl_view_pair(const ImageGrid& img, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  const ImageGrid normalized = hist_normalize(img, spec.normalize);
  ImageGrid a = ssl_view(normalized, spec, rng);
  ImageGrid b = ssl_view(normalized, spec, rng);
  return {std::move(a), std::move(b)};
}

}  // namespace ssldet
