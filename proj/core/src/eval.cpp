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

#include "ssldet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "ssldet/error.hpp"

namespace ssldet {

using nlohmann::json;

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("eval: at least one IoU threshold is required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    const double t = iou_thresholds[i];
    if (t < 0 || t > 1 || (i > 0 && t <= iou_thresholds[i - 1])) {
      throw ConfigError("eval: IoU thresholds must be strictly increasing within [0,1]");
    }
  }
  if (recall_points < 2) throw ConfigError("eval: need at least 2 recall points");
  if (max_detections <= 0) throw ConfigError("eval: max detections must be positive");
  if (!(small_area > 0)) throw ConfigError("eval: small-area threshold must be positive");
  if (agreement_iou < 0 || agreement_iou >= 1) throw ConfigError("eval: agreement IoU must lie in [0,1)");
}

MatchResult match_for_pr(std::span<const ScoredBox> dets, std::span<const Box> gts, double iou_threshold,
                         AreaRange range) {
  MatchResult r{std::vector<MatchFlag>(dets.size(), MatchFlag::FalsePositive), std::vector<bool>(gts.size(), false),
                std::vector<bool>(gts.size(), false)};
  for (std::size_t g = 0; g < gts.size(); ++g) r.gt_ignored[g] = !range.contains(area(gts[g]));
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double v = iou(dets[d].box, gts[g]);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best_gt == gts.size()) continue;
    r.gt_matched[best_gt] = true;
    r.det_flags[d] = r.gt_ignored[best_gt] ? MatchFlag::Ignored : MatchFlag::TruePositive;
  }
  return r;
}

double average_precision(std::vector<RankedFlag> flags, std::size_t n_gt, int recall_points) {
  if (n_gt == 0) return 0.0;
  std::erase_if(flags, [](const RankedFlag& f) { return f.flag == MatchFlag::Ignored; });
  std::stable_sort(flags.begin(), flags.end(), [](const RankedFlag& a, const RankedFlag& b) { return a.score > b.score; });

  const std::size_t n = flags.size();
  std::vector<double> precision(n), recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += flags[k].flag == MatchFlag::TruePositive;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_gt);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double sum = 0;
  std::size_t k = 0;
  for (int i = 0; i < recall_points; ++i) {
    const double level = static_cast<double>(i) / static_cast<double>(recall_points - 1);
    while (k < n && recall[k] < level) ++k;
    if (k == n) break;
    sum += precision[k];
  }
  return sum / static_cast<double>(recall_points);
}

namespace {

struct Stratum {
  double ap = 0;
  double recall = 0;
  std::size_t n_gt = 0;
};

// AP and recall of one class at one threshold within one area range.
Stratum evaluate_class(int category, const DetectionsByImage& dets, const GroundTruthByImage& gts,
                       double threshold, AreaRange range, const EvalConfig& cfg) {
  std::set<std::int64_t> images;
  for (const auto& [id, v] : gts) images.insert(id);
  for (const auto& [id, v] : dets) images.insert(id);

  std::vector<RankedFlag> flags;
  std::size_t n_gt = 0, tp = 0;
  for (std::int64_t id : images) {
    std::vector<ScoredBox> d;
    if (const auto it = dets.find(id); it != dets.end()) {
      for (const auto& s : it->second) {
        if (s.class_id == category) d.push_back(s);
      }
    }
    std::stable_sort(d.begin(), d.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    if (d.size() > static_cast<std::size_t>(cfg.max_detections)) d.resize(static_cast<std::size_t>(cfg.max_detections));

    std::vector<Box> g;
    if (const auto it = gts.find(id); it != gts.end()) {
      for (const auto& a : it->second) {
        if (a.class_id == category) g.push_back(a.box);
      }
    }
    const MatchResult m = match_for_pr(d, g, threshold, range);
    for (std::size_t i = 0; i < d.size(); ++i) {
      flags.push_back({d[i].score, m.det_flags[i]});
      tp += m.det_flags[i] == MatchFlag::TruePositive;
    }
    for (bool ignored : m.gt_ignored) n_gt += !ignored;
  }
  Stratum s;
  s.n_gt = n_gt;
  if (n_gt == 0) return s;
  s.ap = average_precision(std::move(flags), n_gt, cfg.recall_points);
  s.recall = static_cast<double>(tp) / static_cast<double>(n_gt);
  return s;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

MetricsReport evaluate(const DetectionsByImage& dets, const GroundTruthByImage& gts, const EvalConfig& cfg) {
  cfg.validate();
  std::set<int> categories;
  MetricsReport report;
  std::set<std::int64_t> images;
  for (const auto& [id, anns] : gts) {
    images.insert(id);
    report.ground_truths += anns.size();
    for (const auto& a : anns) categories.insert(a.class_id);
  }
  for (const auto& [id, d] : dets) {
    images.insert(id);
    report.detections += d.size();
  }
  report.images = images.size();
  if (categories.empty()) throw DataError("evaluate: no ground truth in any class");

  const AreaRange all{};
  const AreaRange small{0.0, cfg.small_area};
  std::vector<double> class_ap, class_ap50, class_recall, small_ap, small_recall;
  for (int c : categories) {
    ClassMetrics cm;
    cm.category_id = c;
    std::vector<double> aps, recalls, aps_small, recalls_small;
    for (double t : cfg.iou_thresholds) {
      const Stratum s = evaluate_class(c, dets, gts, t, all, cfg);
      cm.n_gt = s.n_gt;
      aps.push_back(s.ap);
      recalls.push_back(s.recall);
      const Stratum ss = evaluate_class(c, dets, gts, t, small, cfg);
      if (ss.n_gt > 0) {
        aps_small.push_back(ss.ap);
        recalls_small.push_back(ss.recall);
      }
    }
    cm.ap = mean(aps);
    cm.recall = mean(recalls);
    cm.ap50 = evaluate_class(c, dets, gts, 0.5, all, cfg).ap;
    class_ap.push_back(cm.ap);
    class_ap50.push_back(cm.ap50);
    class_recall.push_back(cm.recall);
    if (!aps_small.empty()) {
      small_ap.push_back(mean(aps_small));
      small_recall.push_back(mean(recalls_small));
    }
    report.per_class.push_back(cm);
  }
  report.map = mean(class_ap);
  report.map50 = mean(class_ap50);
  report.ar = mean(class_recall);
  if (!small_ap.empty()) {
    report.map_small = mean(small_ap);
    report.ar_small = mean(small_recall);
  }
  return report;
}

namespace {

AgreementReport summarize(const std::vector<double>& values, bool sample_sigma) {
  AgreementReport r;
  r.count = values.size();
  if (values.empty()) return r;
  r.mean = mean(values);
  double ss = 0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double denom = sample_sigma && values.size() > 1 ? static_cast<double>(values.size() - 1)
                                                         : static_cast<double>(values.size());
  r.sigma = std::sqrt(ss / denom);
  return r;
}

}  // namespace

std::optional<AgreementReport> interobserver_iou(const GroundTruthByImage& rater_a, const GroundTruthByImage& rater_b,
                                                 const EvalConfig& cfg) {
  std::vector<double> matched;
  for (const auto& [image, a_anns] : rater_a) {
    const auto it = rater_b.find(image);
    if (it == rater_b.end()) continue;
    const auto& b_anns = it->second;

    struct Pair {
      double iou;
      std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < a_anns.size(); ++i) {
      for (std::size_t j = 0; j < b_anns.size(); ++j) {
        if (a_anns[i].class_id != b_anns[j].class_id) continue;
        const double v = iou(a_anns[i].box, b_anns[j].box);
        if (v > cfg.agreement_iou) pairs.push_back({v, i, j});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.iou > y.iou; });
    std::vector<bool> used_a(a_anns.size(), false), used_b(b_anns.size(), false);
    for (const Pair& p : pairs) {
      if (used_a[p.i] || used_b[p.j]) continue;
      used_a[p.i] = used_b[p.j] = true;
      matched.push_back(p.iou);
    }
  }
  if (matched.empty()) return std::nullopt;
  return summarize(matched, cfg.sample_sigma);
}

AgreementReport model_gt_iou(const GroundTruthByImage& gts, const DetectionsByImage& dets, const EvalConfig& cfg) {
  std::vector<double> values;
  for (const auto& [image, anns] : gts) {
    const auto it = dets.find(image);
    for (const auto& a : anns) {
      double best = 0;
      if (it != dets.end()) {
        for (const auto& d : it->second) {
          if (d.class_id == a.class_id) best = std::max(best, iou(a.box, d.box));
        }
      }
      values.push_back(best);
    }
  }
  return summarize(values, cfg.sample_sigma);
}

GroundTruthByImage ground_truth_by_image(const Dataset& ds, const std::optional<std::string>& rater) {
  GroundTruthByImage out;
  for (const auto& im : ds.images) out[im.id];
  for (const auto& a : ds.annotations) {
    if (rater && a.rater_id != rater) continue;
    out[a.image_id].push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string metrics_to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json doc = {{"mAP", r.map},
              {"mAP50", r.map50},
              {"mAP_small", opt(r.map_small)},
              {"AR", r.ar},
              {"AR_small", opt(r.ar_small)},
              {"images", r.images},
              {"ground_truths", r.ground_truths},
              {"detections", r.detections}};
  doc["per_class"] = json::array();
  for (const auto& c : r.per_class) {
    doc["per_class"].push_back(
        {{"category_id", c.category_id}, {"n_gt", c.n_gt}, {"AP", c.ap}, {"AP50", c.ap50}, {"recall", c.recall}});
  }
  return doc.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const json doc = json::parse(text);
    r.map = doc.at("mAP").get<double>();
    r.map50 = doc.at("mAP50").get<double>();
    if (!doc.at("mAP_small").is_null()) r.map_small = doc.at("mAP_small").get<double>();
    r.ar = doc.at("AR").get<double>();
    if (!doc.at("AR_small").is_null()) r.ar_small = doc.at("AR_small").get<double>();
    r.images = doc.value("images", std::size_t{0});
    r.ground_truths = doc.value("ground_truths", std::size_t{0});
    r.detections = doc.value("detections", std::size_t{0});
    for (const auto& c : doc.value("per_class", json::array())) {
      r.per_class.push_back({c.at("category_id").get<int>(), c.at("n_gt").get<std::size_t>(), c.at("AP").get<double>(),
                             c.at("AP50").get<double>(), c.value("recall", 0.0)});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics JSON: ") + e.what());
  }
  return r;
}

namespace {

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt6(const std::optional<double>& v) { return v ? fmt6(*v) : std::string(); }

}  // namespace

std::string metrics_csv_header() { return "run,mAP,mAP50,mAP_small,AR,AR_small,train_images"; }

std::string metrics_csv_row(const std::string& run, const MetricsReport& r, std::size_t train_images) {
  return run + "," + fmt6(r.map) + "," + fmt6(r.map50) + "," + fmt6(r.map_small) + "," + fmt6(r.ar) + "," +
         fmt6(r.ar_small) + "," + std::to_string(train_images);
}

void save_detections(const DetectionsByImage& dets, const std::filesystem::path& path) {
  json doc = json::array();
  for (const auto& [image, list] : dets) {
    for (const auto& d : list) {
      const auto xywh = d.box.to_xywh();
      doc.push_back({{"image_id", image},
                     {"category_id", d.class_id},
                     {"bbox", {xywh[0], xywh[1], xywh[2], xywh[3]}},
                     {"score", d.score}});
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write detections '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

DetectionsByImage load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections '" + path.string() + "'");
  DetectionsByImage out;
  try {
    json doc;
    in >> doc;
    if (!doc.is_array()) throw DataError("detections file must hold a JSON list");
    std::size_t idx = 0;
    for (const auto& rec : doc) {
      const auto& b = rec.at("bbox");
      if (!b.is_array() || b.size() != 4) {
        throw DataError("detection record " + std::to_string(idx) + ": bbox must be [x,y,w,h]");
      }
      ScoredBox s{Box::from_xywh(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()),
                  rec.at("category_id").get<int>(), rec.at("score").get<double>()};
      if (!s.box.valid() || s.score < 0 || s.score > 1) {
        throw DataError("detection record " + std::to_string(idx) + ": invalid box or score");
      }
      out[rec.at("image_id").get<std::int64_t>()].push_back(s);
      ++idx;
    }
  } catch (const json::exception& e) {
    throw DataError("malformed detections '" + path.string() + "': " + e.what());
  }
  return out;
}

}  // namespace ssldet
