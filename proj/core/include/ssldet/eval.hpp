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

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssldet/data.hpp"
#include "ssldet/geometry.hpp"

namespace ssldet {

using DetectionsByImage = std::map<std::int64_t, std::vector<ScoredBox>>;
using GroundTruthByImage = std::map<std::int64_t, std::vector<Annotation>>;

/// Half-open area interval [lo, hi) in px^2.
struct AreaRange {
  double lo = 0;
  double hi = std::numeric_limits<double>::infinity();
  bool contains(double a) const { return a >= lo && a < hi; }
};

struct EvalConfig {
  std::vector<double> iou_thresholds{0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  int recall_points = 101;
  int max_detections = 100;
  double small_area = 1024.0;
  double agreement_iou = 0.2;
  bool sample_sigma = false;

  void validate() const;
};

/// Detection outcome at one IoU threshold.
enum class MatchFlag : std::int8_t { Ignored = -1, FalsePositive = 0, TruePositive = 1 };

struct MatchResult {
  std::vector<MatchFlag> det_flags;
  std::vector<bool> gt_matched;
  std::vector<bool> gt_ignored;
};

/// Greedy one-to-one matching for a single image and class. `dets` must be
/// sorted by descending score. Each detection takes the unmatched GT with the
/// highest IoU >= iou_threshold (lowest index on ties). Detections that land on
/// a GT outside `range` are Ignored; unmatched detections are false positives.
MatchResult match_for_pr(std::span<const ScoredBox> dets, std::span<const Box> gts, double iou_threshold,
                         AreaRange range);

struct RankedFlag {
  double score = 0;
  MatchFlag flag = MatchFlag::FalsePositive;
};

/// Interpolated AP over `recall_points` evenly spaced recall levels. Flags are
/// ranked by descending score (stable); ignored entries are skipped. Returns 0
/// for n_gt == 0.
double average_precision(std::vector<RankedFlag> flags, std::size_t n_gt, int recall_points = 101);

struct ClassMetrics {
  int category_id = 0;
  std::size_t n_gt = 0;
  double ap = 0;    ///< averaged over IoU thresholds
  double ap50 = 0;
  double recall = 0;
};

struct MetricsReport {
  double map = 0;
  double map50 = 0;
  std::optional<double> map_small;
  double ar = 0;
  std::optional<double> ar_small;
  std::vector<ClassMetrics> per_class;
  std::size_t images = 0;
  std::size_t ground_truths = 0;
  std::size_t detections = 0;
};

/// COCO-style metrics. Classes without ground truth are left out of every mean.
MetricsReport evaluate(const DetectionsByImage& dets, const GroundTruthByImage& gts, const EvalConfig& cfg);

struct AgreementReport {
  double mean = 0;
  double sigma = 0;
  std::size_t count = 0;
};

/// Mean and spread of IoUs between one-to-one matched same-class boxes of two
/// raters (pairs above cfg.agreement_iou, greedy by descending IoU). Empty when
/// nothing matches.
std::optional<AgreementReport> interobserver_iou(const GroundTruthByImage& rater_a, const GroundTruthByImage& rater_b,
                                                 const EvalConfig& cfg);

/// For every ground-truth box, the IoU of the best-overlapping same-class
/// detection in its image (0 when none).
AgreementReport model_gt_iou(const GroundTruthByImage& gts, const DetectionsByImage& dets, const EvalConfig& cfg);

/// Ground truth grouped by image, restricted to annotations whose rater matches (or all when empty).
GroundTruthByImage ground_truth_by_image(const Dataset& ds, const std::optional<std::string>& rater = std::nullopt);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

/// `run,mAP,mAP50,mAP_small,AR,AR_small,train_images`
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& run, const MetricsReport& report, std::size_t train_images);

void save_detections(const DetectionsByImage& dets, const std::filesystem::path& path);
DetectionsByImage load_detections(const std::filesystem::path& path);

}  // namespace ssldet
