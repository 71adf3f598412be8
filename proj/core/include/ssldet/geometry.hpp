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

#include <array>
#include <span>
#include <vector>

namespace ssldet {

/// Axis-aligned box in continuous pixel coordinates, corner convention.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  static Box from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }
  std::array<double, 4> to_xywh() const { return {x1, y1, x2 - x1, y2 - y1}; }

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  /// x2 > x1, y2 > y1, all finite.
  bool valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

struct ScoredBox {
  Box box;
  int class_id = 0;
  double score = 0;

  friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

double area(const Box& b);
double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// Clips to [0,width]x[0,height]. The result may be degenerate.
Box clip_box(const Box& b, double width, double height);

/// Greedy class-wise non-maximum suppression.
///
/// Candidates are visited by descending score, ties broken by lower class id and
/// then input order. A candidate survives when its IoU with every kept box of the
/// same class is at most `iou_thresh`. The output keeps the visiting order.
std::vector<ScoredBox> nms(std::span<const ScoredBox> dets, double iou_thresh);

}  // namespace ssldet
