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

#include "ssldet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssldet {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) && x2 > x1 &&
         y2 > y1;
}

double area(const Box& b) { return (b.x2 - b.x1) * (b.y2 - b.y1); }

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const Box& a, const Box& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Box clip_box(const Box& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height), std::clamp(b.x2, 0.0, width),
          std::clamp(b.y2, 0.0, height)};
}

std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].class_id < dets[b].class_id;
  });

  std::vector<ScoredBox> kept;
  for (std::size_t idx : order) {
    const ScoredBox& cand = dets[idx];
    bool keep = true;
    for (const ScoredBox& k : kept) {
      if (k.class_id == cand.class_id && iou(k.box, cand.box) > iou_thresh) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(cand);
  }
  return kept;
}

}  // namespace ssldet
