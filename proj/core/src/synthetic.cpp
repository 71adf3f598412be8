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

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ssldet/data.hpp"
#include "ssldet/error.hpp"
#include "ssldet/rng.hpp"

namespace ssldet {

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::Disc: return "disc";
    case ShapeKind::Bar: return "bar";
    case ShapeKind::Ring: return "ring";
    case ShapeKind::Cross: return "cross";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Square: return "square";
  }
  return "disc";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  for (auto k : {ShapeKind::Disc, ShapeKind::Bar, ShapeKind::Ring, ShapeKind::Cross, ShapeKind::Triangle,
                 ShapeKind::Square}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown shape kind '" + s + "'");
}

void SynthConfig::validate() const {
  if (n_images <= 0) throw ConfigError("synthetic: n_images must be positive");
  if (image_size < 8) throw ConfigError("synthetic: image_size must be at least 8");
  if (classes.size() < 2) throw ConfigError("synthetic: at least 2 classes are required");
  if (min_objects < 1 || max_objects < min_objects) throw ConfigError("synthetic: invalid object count range");
  for (const auto& c : classes) {
    if (!(c.weight > 0)) throw ConfigError("synthetic: class weights must be positive");
    if (c.min_size < 2 || c.max_size < c.min_size) {
      throw ConfigError("synthetic: invalid size range for class '" + c.name + "'");
    }
    if (c.max_size > image_size) {
      throw DataError("synthetic: class '" + c.name + "' objects do not fit in a " + std::to_string(image_size) +
                      " px image");
    }
  }
  if (raters < 0 || rater_jitter < 0) throw ConfigError("synthetic: invalid rater settings");
  if (noise_level < 0) throw ConfigError("synthetic: noise level must be non-negative");
}

SynthConfig SynthConfig::long_tail_default() {
  SynthConfig cfg;
  cfg.classes = {
      {"disc", ShapeKind::Disc, 8.0, 12, 40},
      {"bar", ShapeKind::Bar, 4.0, 12, 40},
      {"ring", ShapeKind::Ring, 2.0, 10, 28},
      {"cross", ShapeKind::Cross, 1.0, 8, 20},
  };
  return cfg;
}

namespace {

ShapeMask crop_to_content(const ShapeMask& m) {
  int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) throw DataError("render_shape: empty footprint");
  ShapeMask out{x1 - x0 + 1, y1 - y0 + 1, {}};
  out.on.resize(static_cast<std::size_t>(out.width) * out.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.on[static_cast<std::size_t>(y) * out.width + x] = m.at(x + x0, y + y0);
  }
  return out;
}

}  // namespace

ShapeMask render_shape(ShapeKind kind, int width, int height) {
  if (width < 2 || height < 2) throw DataError("render_shape: footprint must be at least 2x2");
  ShapeMask m{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 0)};
  const double cx = width / 2.0, cy = height / 2.0;
  const double rx = width / 2.0, ry = height / 2.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double ex = (px - cx) / rx, ey = (py - cy) / ry;
      const double r2 = ex * ex + ey * ey;
      bool on = false;
      switch (kind) {
        case ShapeKind::Disc: on = r2 <= 1.0; break;
        case ShapeKind::Ring: on = r2 <= 1.0 && r2 >= 0.45 * 0.45; break;
        case ShapeKind::Bar: on = true; break;
        case ShapeKind::Cross: {
          const double arm_x = std::max(1.0, width / 6.0), arm_y = std::max(1.0, height / 6.0);
          on = std::abs(px - cx) <= arm_x || std::abs(py - cy) <= arm_y;
          break;
        }
        case ShapeKind::Triangle: {
          // Apex at top centre, base along the bottom row.
          const double half = (py / height) * rx;
          on = std::abs(px - cx) <= half + 0.5;
          break;
        }
        case ShapeKind::Square: {
          const int t = std::max(1, std::min(width, height) / 5);
          on = x < t || y < t || x >= width - t || y >= height - t;
          break;
        }
      }
      m.on[static_cast<std::size_t>(y) * width + x] = on ? 1 : 0;
    }
  }
  return crop_to_content(m);
}

namespace {

struct Placed {
  int class_id;
  Box box;
};

double quantize_eighth(double v) { return std::round(v * 8.0) / 8.0; }

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> weights;
  for (const auto& c : cfg.classes) weights.push_back(c.weight);
  std::discrete_distribution<int> pick_class(weights.begin(), weights.end());
  std::uniform_int_distribution<int> pick_count(cfg.min_objects, cfg.max_objects);

  Dataset ds;
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    ds.categories.push_back({static_cast<int>(c), cfg.classes[c].name});
  }

  const int size = cfg.image_size;
  std::int64_t next_ann = 1;
  for (int i = 0; i < cfg.n_images; ++i) {
    auto img = std::make_shared<ImageGrid>(size, size);
    for (double& v : img->pixels) {
      v = std::clamp(cfg.background_level + cfg.noise_level * noise(rng), 0.0, 1.0);
    }

    std::vector<Placed> placed;
    const int n_obj = pick_count(rng);
    for (int k = 0; k < n_obj; ++k) {
      const int cls = pick_class(rng);
      const ClassSpec& spec = cfg.classes[static_cast<std::size_t>(cls)];
      const int extent = std::uniform_int_distribution<int>(spec.min_size, spec.max_size)(rng);
      int w = extent, h = extent;
      if (spec.shape == ShapeKind::Bar) {
        const int thick = std::max(2, extent / 4);
        if (std::bernoulli_distribution(0.5)(rng)) {
          h = thick;
        } else {
          w = thick;
        }
      }
      const ShapeMask mask = render_shape(spec.shape, w, h);
      // Non-overlapping placement with a 1 px gap keeps every box tight on its own footprint.
      bool ok = false;
      int ox = 0, oy = 0;
      for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
        ox = std::uniform_int_distribution<int>(0, size - mask.width)(rng);
        oy = std::uniform_int_distribution<int>(0, size - mask.height)(rng);
        const Box cand{ox - 1.0, oy - 1.0, ox + mask.width + 1.0, oy + mask.height + 1.0};
        ok = std::none_of(placed.begin(), placed.end(),
                          [&](const Placed& p) { return intersection_area(p.box, cand) > 0; });
      }
      if (!ok) continue;
      for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
          if (mask.at(x, y)) {
            img->at(ox + x, oy + y) = std::clamp(cfg.foreground_level + cfg.noise_level * noise(rng), 0.0, 1.0);
          }
        }
      }
      placed.push_back({cls, Box{double(ox), double(oy), double(ox + mask.width), double(oy + mask.height)}});
    }

    ImageRecord rec;
    rec.id = i + 1;
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.pgm", i + 1);
    rec.file = name;
    rec.width = size;
    rec.height = size;
    rec.pixels = std::make_shared<const ImageGrid>(quantize_8bit(*img));
    ds.images.push_back(std::move(rec));

    for (const auto& p : placed) {
      if (cfg.raters == 0) {
        ds.annotations.push_back({next_ann++, i + 1, p.class_id, p.box, std::nullopt});
        continue;
      }
      for (int r = 1; r <= cfg.raters; ++r) {
        Box b = p.box;
        if (cfg.rater_jitter > 0) {
          b.x1 += cfg.rater_jitter * noise(rng);
          b.y1 += cfg.rater_jitter * noise(rng);
          b.x2 += cfg.rater_jitter * noise(rng);
          b.y2 += cfg.rater_jitter * noise(rng);
        }
        // Dyadic coordinates survive the xywh round trip exactly.
        b = clip_box({quantize_eighth(b.x1), quantize_eighth(b.y1), quantize_eighth(b.x2), quantize_eighth(b.y2)},
                     size, size);
        if (b.x2 - b.x1 < 1.0) b.x2 = std::min<double>(size, b.x1 + 1.0), b.x1 = b.x2 - 1.0;
        if (b.y2 - b.y1 < 1.0) b.y2 = std::min<double>(size, b.y1 + 1.0), b.y1 = b.y2 - 1.0;
        ds.annotations.push_back({next_ann++, i + 1, p.class_id, b, "R" + std::to_string(r)});
      }
    }
  }
  return ds;
}

}  // namespace ssldet
