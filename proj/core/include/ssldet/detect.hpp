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
#include <cstdint>
#include <span>
#include <vector>

#include "ssldet/augment.hpp"
#include "ssldet/data.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/geometry.hpp"
#include "ssldet/optim.hpp"

namespace ssldet {

/// Square anchors centred on a regular grid of cells.
struct AnchorGrid {
  int stride = 8;
  int cells_x = 0, cells_y = 0;
  std::vector<double> sizes;
  /// Index = (cell_y * cells_x + cell_x) * sizes.size() + size_index.
  std::vector<Box> anchors;

  static AnchorGrid make(int image_width, int image_height, int stride, std::vector<double> sizes);
  std::size_t per_cell() const { return sizes.size(); }
  std::size_t size() const { return anchors.size(); }
};

struct DetConfig {
  double pos_iou = 0.5;
  double neg_iou = 0.4;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
  std::vector<double> anchor_sizes{8, 16, 32};
  int head_channels = 32;
  double box_loss_weight = 1.0;

  OptimConfig optim{0.001, 0.9, 1e-4, 0.0, false};
  int batch_size = 8;
  int max_epochs = 30;
  int patience = 5;
  /// Early stopping is not considered before this many epochs.
  int min_epochs = 1;
  double flip_prob = 0.5;
  NormalizeMode normalize = NormalizeMode::Equalize;
  bool oversample = true;
  double oversample_threshold = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kIgnoreLabel = -1;
inline constexpr int kBackgroundLabel = 0;

/// Per-anchor training targets. Labels: -1 ignore, 0 background, k+1 for class index k.
struct DetTargets {
  std::vector<int> labels;
  std::vector<std::array<double, 4>> deltas;  ///< meaningful for positive anchors only
  std::vector<int> matched_gt;                ///< -1 when unmatched

  std::size_t num_positive() const;
};

/// (dcx/w_a, dcy/h_a, log(w/w_a), log(h/h_a)).
std::array<double, 4> encode_box(const Box& gt, const Box& anchor);
Box decode_box(const std::array<double, 4>& deltas, const Box& anchor);

/// Max-IoU assignment with a pos/neg band; every GT also claims as a positive its
/// best anchor not claimed by an earlier GT (lowest index on ties).
DetTargets match_anchors(std::span<const Box> anchors, std::span<const Box> gt_boxes, std::span<const int> gt_classes,
                         const DetConfig& cfg);

/// Raw head output for one image.
struct DetPrediction {
  Tensor logits;  ///< (anchors, classes + 1); column 0 is background
  Tensor deltas;  ///< (anchors, 4)
};

struct DetLoss {
  double total = 0;
  double cls = 0;
  double box = 0;
  DetPrediction grad;
};

/// Mean softmax cross-entropy over non-ignored anchors plus box_loss_weight
/// times the mean absolute error over the 4 offsets of positive anchors.
DetLoss detection_loss(const DetPrediction& pred, const DetTargets& targets, const DetConfig& cfg);

/// Softmax, background dropped, offsets decoded and clipped, score threshold,
/// class-wise NMS and the top-`max_detections` cut. `category_ids[k]` names class index k.
std::vector<ScoredBox> decode_predictions(const DetPrediction& pred, const AnchorGrid& anchors,
                                          std::span<const int> category_ids, double image_width,
                                          double image_height, const DetConfig& cfg);

/// Encoder trunk (no projection) plus a single-stage head: 3x3 conv + ReLU,
/// then 1x1 convs for class logits and box offsets. Head parameters are named
/// `head.{conv,cls,box}.{weight,bias}`.
class Detector {
 public:
  Detector(EncoderConfig encoder, DetConfig det, std::vector<int> category_ids);

  const Encoder& encoder() const { return encoder_; }
  const DetConfig& config() const { return det_; }
  const AnchorGrid& anchors() const { return anchors_; }
  const std::vector<int>& category_ids() const { return category_ids_; }
  std::size_t num_classes() const { return category_ids_.size(); }

  /// Fresh encoder trunk and head from `seed`.
  ParamStore init(std::uint64_t seed) const;
  /// Fresh head, encoder tensors copied from `encoder_params` (names `encoder.*`).
  ParamStore init_from_encoder(const ParamStore& encoder_params, std::uint64_t seed) const;

  struct Trace {
    Encoder::Trace encoder;
    Tensor hidden;  ///< head ReLU output
    DetPrediction pred;
  };

  /// Forward on an already histogram-normalized image.
  Trace forward(const ParamStore& params, const ImageGrid& normalized) const;
  void backward(ParamStore& params, const Trace& trace, const DetPrediction& grad) const;

  /// Normalizes, runs the network and decodes.
  std::vector<ScoredBox> predict(const ParamStore& params, const ImageGrid& img) const;
  std::vector<ScoredBox> predict_normalized(const ParamStore& params, const ImageGrid& normalized) const;

  /// Maps category ids to 0-based class indices.
  int class_index(int category_id) const;

 private:
  Encoder encoder_;
  DetConfig det_;
  std::vector<int> category_ids_;
  AnchorGrid anchors_;
};

}  // namespace ssldet
