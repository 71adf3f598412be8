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

#include "ssldet/detect.hpp"

#include <algorithm>
#include <cmath>

#include "ssldet/augment.hpp"
#include "ssldet/checkpoint.hpp"
#include "ssldet/error.hpp"
#include "ssldet/layers.hpp"

namespace ssldet {

void DetConfig::validate() const {
  if (!(neg_iou >= 0 && neg_iou < pos_iou && pos_iou <= 1)) throw ConfigError("detect: need 0 <= neg_iou < pos_iou <= 1");
  if (score_threshold < 0 || score_threshold > 1 || nms_iou < 0 || nms_iou > 1) {
    throw ConfigError("detect: thresholds must lie in [0,1]");
  }
  if (max_detections <= 0) throw ConfigError("detect: max_detections must be positive");
  if (anchor_sizes.empty() || std::any_of(anchor_sizes.begin(), anchor_sizes.end(), [](double s) { return s <= 0; })) {
    throw ConfigError("detect: anchor sizes must be positive");
  }
  if (head_channels <= 0 || batch_size <= 0 || max_epochs < 0 || patience <= 0 || min_epochs < 0) {
    throw ConfigError("detect: invalid head/training sizes");
  }
  if (box_loss_weight < 0) throw ConfigError("detect: box loss weight must be non-negative");
  if (flip_prob < 0 || flip_prob > 1) throw ConfigError("detect: flip probability must lie in [0,1]");
  optim.validate();
}

AnchorGrid AnchorGrid::make(int image_width, int image_height, int stride, std::vector<double> sizes) {
  if (stride <= 0 || image_width % stride || image_height % stride) {
    throw ConfigError("anchor grid: stride must divide the image size");
  }
  AnchorGrid g;
  g.stride = stride;
  g.cells_x = image_width / stride;
  g.cells_y = image_height / stride;
  g.sizes = std::move(sizes);
  g.anchors.reserve(static_cast<std::size_t>(g.cells_x * g.cells_y) * g.sizes.size());
  for (int cy = 0; cy < g.cells_y; ++cy) {
    for (int cx = 0; cx < g.cells_x; ++cx) {
      const double x = (cx + 0.5) * stride, y = (cy + 0.5) * stride;
      for (double s : g.sizes) g.anchors.push_back({x - s / 2, y - s / 2, x + s / 2, y + s / 2});
    }
  }
  return g;
}

std::size_t DetTargets::num_positive() const {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
}

std::array<double, 4> encode_box(const Box& gt, const Box& anchor) {
  const double wa = anchor.width(), ha = anchor.height();
  return {(gt.center_x() - anchor.center_x()) / wa, (gt.center_y() - anchor.center_y()) / ha,
          std::log(gt.width() / wa), std::log(gt.height() / ha)};
}

Box decode_box(const std::array<double, 4>& d, const Box& anchor) {
  const double wa = anchor.width(), ha = anchor.height();
  const double cx = anchor.center_x() + d[0] * wa, cy = anchor.center_y() + d[1] * ha;
  // Clamp log-scale offsets so an untrained head cannot overflow exp().
  const double w = wa * std::exp(std::min(d[2], 8.0)), h = ha * std::exp(std::min(d[3], 8.0));
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

DetTargets match_anchors(std::span<const Box> anchors, std::span<const Box> gt_boxes, std::span<const int> gt_classes,
                         const DetConfig& cfg) {
  if (gt_boxes.size() != gt_classes.size()) throw ShapeError("match_anchors: boxes/classes length mismatch");
  const std::size_t na = anchors.size(), ng = gt_boxes.size();
  DetTargets t{std::vector<int>(na, kBackgroundLabel), std::vector<std::array<double, 4>>(na, {0, 0, 0, 0}),
               std::vector<int>(na, -1)};
  if (ng == 0) return t;

  std::vector<double> ious(na * ng);
  std::vector<double> best_gt_iou(na, -1.0);
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t g = 0; g < ng; ++g) {
      const double v = ious[a * ng + g] = iou(anchors[a], gt_boxes[g]);
      if (v > best_gt_iou[a]) {
        best_gt_iou[a] = v;
        t.matched_gt[a] = static_cast<int>(g);
      }
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    const double v = best_gt_iou[a];
    if (v >= cfg.pos_iou) {
      t.labels[a] = gt_classes[static_cast<std::size_t>(t.matched_gt[a])] + 1;
    } else if (v >= cfg.neg_iou) {
      t.labels[a] = kIgnoreLabel;
    } else {
      t.labels[a] = kBackgroundLabel;
      t.matched_gt[a] = -1;
    }
  }
  // Forced assignment: each GT takes its best anchor not already taken by an earlier GT.
  std::vector<bool> forced(na, false);
  for (std::size_t g = 0; g < ng; ++g) {
    std::size_t pick = na;
    for (std::size_t a = 0; a < na; ++a) {
      if (!forced[a] && (pick == na || ious[a * ng + g] > ious[pick * ng + g])) pick = a;
    }
    if (pick == na) break;
    forced[pick] = true;
    t.matched_gt[pick] = static_cast<int>(g);
    t.labels[pick] = gt_classes[g] + 1;
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (t.labels[a] > 0) t.deltas[a] = encode_box(gt_boxes[static_cast<std::size_t>(t.matched_gt[a])], anchors[a]);
    if (t.labels[a] == kIgnoreLabel) t.matched_gt[a] = -1;
  }
  return t;
}

DetLoss detection_loss(const DetPrediction& pred, const DetTargets& targets, const DetConfig& cfg) {
  const std::size_t na = targets.labels.size();
  if (pred.logits.rank() != 2 || pred.logits.dim(0) != na || pred.deltas.shape() != Shape{na, 4}) {
    throw ShapeError("detection_loss: predictions " + shape_string(pred.logits.shape()) + "/" +
                     shape_string(pred.deltas.shape()) + " do not match " + std::to_string(na) + " anchors");
  }
  const std::size_t nc = pred.logits.dim(1);
  DetLoss out;
  out.grad = {Tensor(pred.logits.shape()), Tensor(pred.deltas.shape())};

  std::size_t counted = 0, positives = 0;
  for (int l : targets.labels) {
    counted += l != kIgnoreLabel;
    positives += l > 0;
  }

  if (counted > 0) {
    const double inv = 1.0 / static_cast<double>(counted);
    for (std::size_t a = 0; a < na; ++a) {
      const int label = targets.labels[a];
      if (label == kIgnoreLabel) continue;
      if (label >= static_cast<int>(nc)) throw ShapeError("detection_loss: label exceeds logit width");
      const double* z = pred.logits.data() + a * nc;
      const double mx = *std::max_element(z, z + nc);
      double denom = 0;
      for (std::size_t k = 0; k < nc; ++k) denom += std::exp(z[k] - mx);
      const double lse = mx + std::log(denom);
      out.cls += (lse - z[label]) * inv;
      double* g = out.grad.logits.data() + a * nc;
      for (std::size_t k = 0; k < nc; ++k) g[k] = std::exp(z[k] - lse) * inv;
      g[label] -= inv;
    }
  }
  if (positives > 0) {
    const double inv = cfg.box_loss_weight / (4.0 * static_cast<double>(positives));
    for (std::size_t a = 0; a < na; ++a) {
      if (targets.labels[a] <= 0) continue;
      for (std::size_t k = 0; k < 4; ++k) {
        const double diff = pred.deltas[a * 4 + k] - targets.deltas[a][k];
        out.box += std::abs(diff) / (4.0 * static_cast<double>(positives));
        out.grad.deltas[a * 4 + k] = diff > 0 ? inv : (diff < 0 ? -inv : 0.0);
      }
    }
  }
  out.total = out.cls + cfg.box_loss_weight * out.box;
  if (!std::isfinite(out.total)) throw DivergenceError("detection_loss: non-finite loss");
  return out;
}

std::vector<ScoredBox> decode_predictions(const DetPrediction& pred, const AnchorGrid& anchors,
                                          std::span<const int> category_ids, double image_width,
                                          double image_height, const DetConfig& cfg) {
  const std::size_t na = anchors.size(), nc = category_ids.size() + 1;
  if (pred.logits.shape() != Shape{na, nc} || pred.deltas.shape() != Shape{na, 4}) {
    throw ShapeError("decode_predictions: outputs do not match the anchor grid");
  }
  std::vector<ScoredBox> cands;
  std::vector<double> prob(nc);
  for (std::size_t a = 0; a < na; ++a) {
    const double* z = pred.logits.data() + a * nc;
    const double mx = *std::max_element(z, z + nc);
    double denom = 0;
    for (std::size_t k = 0; k < nc; ++k) denom += (prob[k] = std::exp(z[k] - mx));
    bool decoded = false;
    Box box;
    for (std::size_t k = 1; k < nc; ++k) {
      const double p = prob[k] / denom;
      if (p < cfg.score_threshold) continue;
      if (!decoded) {
        const double* d = pred.deltas.data() + a * 4;
        box = clip_box(decode_box({d[0], d[1], d[2], d[3]}, anchors.anchors[a]), image_width, image_height);
        decoded = true;
      }
      if (!box.valid()) break;
      cands.push_back({box, category_ids[k - 1], p});
    }
  }
  auto kept = nms(cands, cfg.nms_iou);
  if (kept.size() > static_cast<std::size_t>(cfg.max_detections)) {
    kept.resize(static_cast<std::size_t>(cfg.max_detections));
  }
  return kept;
}

// ---------------------------------------------------------------------------

Detector::Detector(EncoderConfig encoder, DetConfig det, std::vector<int> category_ids)
    : encoder_(std::move(encoder)), det_(std::move(det)), category_ids_(std::move(category_ids)) {
  det_.validate();
  if (category_ids_.empty()) throw ConfigError("detector: at least one category is required");
  const auto& ec = encoder_.config();
  anchors_ = AnchorGrid::make(ec.input_size, ec.input_size, ec.feature_stride(), det_.anchor_sizes);
}

ParamStore Detector::init(std::uint64_t seed) const {
  ParamStore params;
  encoder_.init(params, derive_seed(seed, {0xe4c0deULL}), /*with_projection=*/false);
  Rng rng(derive_seed(seed, {0x4eadULL}));
  const auto feat = static_cast<std::size_t>(encoder_.config().stage_channels.back());
  const auto hc = static_cast<std::size_t>(det_.head_channels);
  const std::size_t a = anchors_.per_cell(), nc = num_classes() + 1;
  params.add("head.conv.weight", he_normal({hc, feat, 3, 3}, feat * 9, rng));
  params.add("head.conv.bias", Tensor({hc}));
  params.add("head.cls.weight", he_normal({a * nc, hc, 1, 1}, hc, rng));
  params.add("head.cls.bias", Tensor({a * nc}));
  params.add("head.box.weight", he_normal({a * 4, hc, 1, 1}, hc, rng));
  params.add("head.box.bias", Tensor({a * 4}));
  return params;
}

ParamStore Detector::init_from_encoder(const ParamStore& encoder_params, std::uint64_t seed) const {
  ParamStore params = init(seed);
  load_prefixed(params, encoder_params, "encoder.");
  return params;
}

Detector::Trace Detector::forward(const ParamStore& params, const ImageGrid& normalized) const {
  Trace t;
  t.encoder = encoder_.forward(params, normalized, /*with_projection=*/false);
  t.hidden = nn::relu_forward(
      nn::conv2d_forward(t.encoder.features, params.value("head.conv.weight"), params.value("head.conv.bias")));
  const Tensor cls = nn::conv2d_forward(t.hidden, params.value("head.cls.weight"), params.value("head.cls.bias"));
  const Tensor box = nn::conv2d_forward(t.hidden, params.value("head.box.weight"), params.value("head.box.bias"));

  const std::size_t a = anchors_.per_cell(), nc = num_classes() + 1;
  const std::size_t cells = static_cast<std::size_t>(anchors_.cells_x * anchors_.cells_y);
  t.pred.logits = Tensor({cells * a, nc});
  t.pred.deltas = Tensor({cells * a, 4});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t s = 0; s < a; ++s) {
      const std::size_t anchor = cell * a + s;
      for (std::size_t k = 0; k < nc; ++k) t.pred.logits[anchor * nc + k] = cls[(s * nc + k) * cells + cell];
      for (std::size_t k = 0; k < 4; ++k) t.pred.deltas[anchor * 4 + k] = box[(s * 4 + k) * cells + cell];
    }
  }
  return t;
}

void Detector::backward(ParamStore& params, const Trace& t, const DetPrediction& grad) const {
  const std::size_t a = anchors_.per_cell(), nc = num_classes() + 1;
  const std::size_t cells = static_cast<std::size_t>(anchors_.cells_x * anchors_.cells_y);
  const auto cy = static_cast<std::size_t>(anchors_.cells_y), cx = static_cast<std::size_t>(anchors_.cells_x);
  Tensor g_cls({a * nc, cy, cx}), g_box({a * 4, cy, cx});
  for (std::size_t cell = 0; cell < cells; ++cell) {
    for (std::size_t s = 0; s < a; ++s) {
      const std::size_t anchor = cell * a + s;
      for (std::size_t k = 0; k < nc; ++k) g_cls[(s * nc + k) * cells + cell] = grad.logits[anchor * nc + k];
      for (std::size_t k = 0; k < 4; ++k) g_box[(s * 4 + k) * cells + cell] = grad.deltas[anchor * 4 + k];
    }
  }

  auto accumulate = [&](const std::string& name, const Tensor& g) {
    Tensor& dst = params.grad(name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  };
  auto dc = nn::conv2d_backward(t.hidden, params.value("head.cls.weight"), g_cls);
  auto db = nn::conv2d_backward(t.hidden, params.value("head.box.weight"), g_box);
  accumulate("head.cls.weight", dc.weight);
  accumulate("head.cls.bias", dc.bias);
  accumulate("head.box.weight", db.weight);
  accumulate("head.box.bias", db.bias);

  Tensor g_hidden = dc.input;
  for (std::size_t i = 0; i < g_hidden.size(); ++i) g_hidden[i] += db.input[i];
  g_hidden = nn::relu_backward(t.hidden, g_hidden);
  auto dh = nn::conv2d_backward(t.encoder.features, params.value("head.conv.weight"), g_hidden);
  accumulate("head.conv.weight", dh.weight);
  accumulate("head.conv.bias", dh.bias);

  encoder_.backward(params, t.encoder, &dh.input, nullptr);
}

std::vector<ScoredBox> Detector::predict_normalized(const ParamStore& params, const ImageGrid& normalized) const {
  const Trace t = forward(params, normalized);
  return decode_predictions(t.pred, anchors_, category_ids_, normalized.width, normalized.height, det_);
}

std::vector<ScoredBox> Detector::predict(const ParamStore& params, const ImageGrid& img) const {
  return predict_normalized(params, hist_normalize(img, det_.normalize));
}

int Detector::class_index(int category_id) const {
  const auto it = std::find(category_ids_.begin(), category_ids_.end(), category_id);
  if (it == category_ids_.end()) throw DataError("detector: unknown category id " + std::to_string(category_id));
  return static_cast<int>(it - category_ids_.begin());
}

}  // namespace ssldet
