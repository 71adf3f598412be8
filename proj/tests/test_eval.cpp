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

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "oracles/coco_oracle.hpp"
#include "oracles/instances.hpp"
#include "ssldet/data.hpp"
#include "ssldet/error.hpp"
#include "ssldet/eval.hpp"
#include "support.hpp"

using namespace ssldet;

namespace {

Annotation gt(std::int64_t image, int cls, Box b) { return {0, image, cls, b, std::nullopt}; }

std::vector<MatchFlag> flags_at(const ScoredBox& d, const Box& g, double t) {
  return match_for_pr(std::vector<ScoredBox>{d}, std::vector<Box>{g}, t, {}).det_flags;
}

void check_same(const MetricsReport& r, const oracle::Metrics& o, double tol) {
  CHECK(std::abs(r.map - o.map) <= tol);
  CHECK(std::abs(r.map50 - o.map50) <= tol);
  CHECK(std::abs(r.ar - o.ar) <= tol);
  REQUIRE(r.map_small.has_value() == o.map_small.has_value());
  if (r.map_small) {
    CHECK(std::abs(*r.map_small - *o.map_small) <= tol);
    CHECK(std::abs(*r.ar_small - *o.ar_small) <= tol);
  }
  REQUIRE(r.per_class.size() == o.class_ap.size());
  for (const auto& c : r.per_class) CHECK(std::abs(c.ap - o.class_ap.at(c.category_id)) <= tol);
}

}  // namespace

TEST_CASE("match_for_pr examples") {
  const Box g{0, 0, 10, 10};
  for (double t = 0.5; t < 0.96; t += 0.05) CHECK(flags_at({g, 0, 0.9}, g, t)[0] == MatchFlag::TruePositive);

  // Shift by s: IoU (10 - s) / (10 + s) = 0.6 at s = 2.5.
  const ScoredBox d{{2.5, 0, 12.5, 10}, 0, 0.9};
  REQUIRE(iou(d.box, g) == doctest::Approx(0.6));
  CHECK(flags_at(d, g, 0.5)[0] == MatchFlag::TruePositive);
  CHECK(flags_at(d, g, 0.6)[0] == MatchFlag::TruePositive);
  CHECK(flags_at(d, g, 0.65)[0] == MatchFlag::FalsePositive);

  const std::vector<ScoredBox> dup{{g, 0, 0.9}, {g, 0, 0.8}};
  const auto m = match_for_pr(dup, std::vector<Box>{g}, 0.5, {});
  CHECK(m.det_flags == std::vector<MatchFlag>{MatchFlag::TruePositive, MatchFlag::FalsePositive});
  CHECK(m.gt_matched == std::vector<bool>{true});

  const auto small_only = match_for_pr(dup, std::vector<Box>{g}, 0.5, {0, 50});
  CHECK(small_only.det_flags == std::vector<MatchFlag>{MatchFlag::Ignored, MatchFlag::FalsePositive});
  CHECK(small_only.gt_ignored == std::vector<bool>{true});
}

TEST_CASE("average_precision examples") {
  using F = MatchFlag;
  CHECK(average_precision({{0.9, F::TruePositive}, {0.8, F::TruePositive}, {0.1, F::FalsePositive}}, 2) == 1.0);
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({{0.5, F::FalsePositive}}, 0) == 0.0);

  // [TP, FP, TP] on 2 GT: staircase precision 1 up to recall 0.5, then 2/3 up to recall 1.
  const double staircase = (51 * 1.0 + 50 * (2.0 / 3.0)) / 101;
  CHECK(std::abs(average_precision({{0.9, F::TruePositive}, {0.8, F::FalsePositive}, {0.7, F::TruePositive}}, 2) -
                 staircase) <= 1e-15);
  // Ignored entries and input order do not matter.
  CHECK(std::abs(average_precision({{0.7, F::TruePositive}, {0.85, F::Ignored}, {0.9, F::TruePositive},
                                    {0.8, F::FalsePositive}},
                                   2) -
                 staircase) <= 1e-15);
}

TEST_CASE("evaluate trivial cases") {
  GroundTruthByImage gts;
  gts[1] = {gt(1, 0, {0, 0, 10, 10}), gt(1, 1, {20, 20, 60, 60})};
  gts[2] = {gt(2, 0, {5, 5, 50, 50})};
  DetectionsByImage perfect;
  for (const auto& [id, anns] : gts) {
    for (const auto& a : anns) perfect[id].push_back({a.box, a.class_id, 1.0});
  }
  const auto r = evaluate(perfect, gts, EvalConfig{});
  CHECK(r.map == 1.0);
  CHECK(r.map50 == 1.0);
  CHECK(r.ar == 1.0);
  CHECK(*r.map_small == 1.0);
  CHECK(*r.ar_small == 1.0);
  CHECK(r.images == 2);
  CHECK(r.ground_truths == 3);
  CHECK(r.detections == 3);

  const auto empty = evaluate({}, gts, EvalConfig{});
  CHECK(empty.map == 0.0);
  CHECK(empty.map50 == 0.0);
  CHECK(empty.ar == 0.0);
  CHECK(*empty.map_small == 0.0);

  GroundTruthByImage none;
  none[1] = {};
  CHECK_THROWS_AS(evaluate(perfect, none, EvalConfig{}), DataError);
}

TEST_CASE("classes without ground truth are excluded") {
  GroundTruthByImage gts;
  gts[1] = {gt(1, 0, {0, 0, 40, 40})};
  DetectionsByImage dets;
  dets[1] = {{{0, 0, 40, 40}, 0, 0.9}, {{50, 50, 60, 60}, 7, 0.95}};
  const auto r = evaluate(dets, gts, EvalConfig{});
  CHECK(r.per_class.size() == 1);
  CHECK(r.map == 1.0);
  CHECK_FALSE(r.map_small.has_value());
}

TEST_CASE("constructed three-image fixture matches the oracle") {
  GroundTruthByImage gts;
  gts[1] = {gt(1, 0, {0, 0, 20, 20}), gt(1, 1, {30, 30, 80, 80})};
  gts[2] = {gt(2, 0, {10, 10, 30, 25}), gt(2, 0, {12, 12, 32, 27})};
  gts[3] = {gt(3, 1, {0, 0, 50, 50})};
  DetectionsByImage dets;
  dets[1] = {{{1, 1, 21, 19}, 0, 0.9}, {{32, 28, 78, 82}, 1, 0.6}, {{0, 0, 20, 20}, 1, 0.3}};
  dets[2] = {{{11, 11, 31, 26}, 0, 0.8}, {{10, 10, 30, 25}, 0, 0.7}, {{60, 60, 70, 70}, 0, 0.95}};
  dets[3] = {{{5, 5, 45, 52}, 1, 0.85}};
  const EvalConfig cfg;
  check_same(evaluate(dets, gts, cfg), oracle::evaluate(dets, gts, cfg), 1e-12);
}

TEST_CASE("evaluate agrees with the brute-force oracle on random instances") {
  Rng rng(2024);
  const EvalConfig cfg;
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracle::random_instance(rng);
    const auto r = evaluate(inst.dets, inst.gts, cfg);
    check_same(r, oracle::evaluate(inst.dets, inst.gts, cfg), 1e-9);
    CHECK(r.map50 >= r.map - 1e-12);
  }
}

TEST_CASE("evaluate invariants") {
  Rng rng(77);
  const EvalConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = oracle::random_instance(rng);
    const auto base = evaluate(inst.dets, inst.gts, cfg);
    for (double v : {base.map, base.map50, base.ar}) CHECK((v >= 0.0 && v <= 1.0));
    double sum = 0;
    for (const auto& c : base.per_class) sum += c.ap;
    CHECK(std::abs(sum / static_cast<double>(base.per_class.size()) - base.map) <= 1e-9);

    SUBCASE("score scaling") {
      auto scaled = inst.dets;
      for (auto& [id, list] : scaled) {
        for (auto& d : list) d.score *= 0.37;
      }
      const auto r = evaluate(scaled, inst.gts, cfg);
      CHECK(r.map == base.map);
      CHECK(r.ar == base.ar);
    }
    SUBCASE("adding a perfect top detection for an undetected box never lowers AP") {
      // Only boxes no same-class detection reaches at IoU 0.5: otherwise the new
      // detection could take a box from a lower-scored one and reorder the curve.
      for (const auto& [id, anns] : inst.gts) {
        const auto it = inst.dets.find(id);
        const Annotation* target = nullptr;
        for (const auto& a : anns) {
          bool reached = false;
          if (it != inst.dets.end()) {
            for (const auto& d : it->second) reached |= d.class_id == a.class_id && iou(d.box, a.box) >= 0.5;
          }
          if (!reached) {
            target = &a;
            break;
          }
        }
        if (!target) continue;
        auto more = inst.dets;
        more[id].push_back({target->box, target->class_id, 2.0});
        const auto r = evaluate(more, inst.gts, cfg);
        for (std::size_t c = 0; c < r.per_class.size(); ++c) CHECK(r.per_class[c].ap >= base.per_class[c].ap - 1e-12);
        break;
      }
    }
    SUBCASE("adding a zero-overlap lowest detection never raises AP") {
      auto more = inst.dets;
      more.begin()->second.push_back({{1000, 1000, 1010, 1010}, base.per_class.front().category_id, -1.0});
      const auto r = evaluate(more, inst.gts, cfg);
      for (std::size_t c = 0; c < r.per_class.size(); ++c) CHECK(r.per_class[c].ap <= base.per_class[c].ap + 1e-12);
    }
  }
}

TEST_CASE("max detections applies per image and class") {
  GroundTruthByImage gts;
  gts[1] = {gt(1, 0, {0, 0, 10, 10})};
  DetectionsByImage dets;
  for (int i = 0; i < 5; ++i) dets[1].push_back({{50.0 + i, 50, 60.0 + i, 60}, 0, 0.9 - 0.01 * i});
  dets[1].push_back({{0, 0, 10, 10}, 0, 0.1});
  EvalConfig cfg;
  cfg.max_detections = 5;
  CHECK(evaluate(dets, gts, cfg).ar == 0.0);
  cfg.max_detections = 6;
  CHECK(evaluate(dets, gts, cfg).ar == 1.0);
}

TEST_CASE("inter-observer agreement") {
  const EvalConfig cfg;
  GroundTruthByImage a, b;
  a[1] = {gt(1, 0, {0, 0, 10, 10}), gt(1, 1, {20, 20, 40, 40})};
  const auto same = interobserver_iou(a, a, cfg);
  REQUIRE(same.has_value());
  CHECK(same->mean == 1.0);
  CHECK(same->sigma == 0.0);
  CHECK(same->count == 2);

  b[1] = {gt(1, 0, {60, 60, 70, 70}), gt(1, 0, {20, 20, 40, 40})};
  CHECK_FALSE(interobserver_iou(a, b, cfg).has_value());

  // Shifts s with (10 - s) / (10 + s) = 0.5, 0.6, 0.7.
  GroundTruthByImage p, q;
  int k = 0;
  for (double target : {0.5, 0.6, 0.7}) {
    const double s = 10 * (1 - target) / (1 + target);
    const double y = 30.0 * k++;
    p[1].push_back(gt(1, 0, {0, y, 10, y + 10}));
    q[1].push_back(gt(1, 0, {s, y, 10 + s, y + 10}));
  }
  const auto fixture = interobserver_iou(p, q, cfg);
  REQUIRE(fixture.has_value());
  CHECK(std::abs(fixture->mean - 0.6) <= 1e-6);
  CHECK(std::abs(fixture->sigma - std::sqrt(0.02 / 3)) <= 1e-6);
  EvalConfig sample = cfg;
  sample.sample_sigma = true;
  CHECK(std::abs(interobserver_iou(p, q, sample)->sigma - 0.1) <= 1e-6);
}

TEST_CASE("agreement matching is one-to-one by descending IoU") {
  GroundTruthByImage a, b;
  a[1] = {gt(1, 0, {0, 0, 10, 10})};
  b[1] = {gt(1, 0, {1, 0, 11, 10}), gt(1, 0, {0, 0, 10, 10})};
  const auto r = interobserver_iou(a, b, EvalConfig{});
  REQUIRE(r.has_value());
  CHECK(r->count == 1);
  CHECK(r->mean == 1.0);
}

TEST_CASE("model to ground-truth IoU") {
  const EvalConfig cfg;
  GroundTruthByImage gts;
  gts[1] = {gt(1, 0, {0, 0, 10, 10})};
  gts[2] = {gt(2, 1, {0, 0, 10, 10})};
  DetectionsByImage exact{{1, {{{0, 0, 10, 10}, 0, 0.5}}}, {2, {{{0, 0, 10, 10}, 1, 0.5}}}};
  CHECK(model_gt_iou(gts, exact, cfg).mean == 1.0);
  CHECK(model_gt_iou(gts, {}, cfg).mean == 0.0);
  CHECK(model_gt_iou(gts, {}, cfg).count == 2);

  GroundTruthByImage one;
  one[1] = {gt(1, 0, {0, 0, 10, 10})};
  // Shifts giving IoU 0.3 and 0.8.
  const double s3 = 10 * 0.7 / 1.3, s8 = 10 * 0.2 / 1.8;
  DetectionsByImage two{{1, {{{s3, 0, 10 + s3, 10}, 0, 0.9}, {{s8, 0, 10 + s8, 10}, 0, 0.1}, {{0, 0, 10, 10}, 1, 1.0}}}};
  CHECK(model_gt_iou(one, two, cfg).mean == doctest::Approx(0.8));
}

TEST_CASE("metrics serialization") {
  Rng rng(3);
  const auto inst = oracle::random_instance(rng);
  const auto r = evaluate(inst.dets, inst.gts, EvalConfig{});
  const auto back = metrics_from_json(metrics_to_json(r));
  CHECK(back.map == r.map);
  CHECK(back.map50 == r.map50);
  CHECK(back.ar == r.ar);
  CHECK(back.map_small == r.map_small);
  CHECK(back.per_class.size() == r.per_class.size());
  CHECK_THROWS_AS(metrics_from_json("{}"), DataError);

  MetricsReport m;
  m.map = 0.5;
  m.map50 = 0.75;
  m.ar = 0.25;
  CHECK(metrics_csv_row("x", m, 12) == "x,0.500000,0.750000,,0.250000,,12");
  CHECK(metrics_csv_header() == "run,mAP,mAP50,mAP_small,AR,AR_small,train_images");
}

TEST_CASE("detections file round trip") {
  test::TempDir dir;
  DetectionsByImage dets{{4, {{{1, 2, 11, 22}, 2, 0.5}}}, {9, {{{0.5, 0.25, 3, 4}, 0, 1.0}}}};
  save_detections(dets, dir.path() / "d.json");
  CHECK(load_detections(dir.path() / "d.json") == dets);

  std::ofstream(dir.path() / "bad.json") << R"([{"image_id":1,"category_id":0,"bbox":[0,0,-1,3],"score":0.5}])";
  CHECK_THROWS_AS(load_detections(dir.path() / "bad.json"), DataError);
  std::ofstream(dir.path() / "bad2.json") << R"([{"image_id":1,"category_id":0,"bbox":[0,0,1,3],"score":1.5}])";
  CHECK_THROWS_AS(load_detections(dir.path() / "bad2.json"), DataError);
  CHECK_THROWS_AS(load_detections(dir.path() / "missing.json"), DataError);
}

TEST_CASE("ground truth grouping by rater") {
  Dataset ds;
  ds.categories = {{0, "a"}};
  ds.images = {{1, "a", 10, 10, nullptr}, {2, "b", 10, 10, nullptr}};
  ds.annotations = {{1, 1, 0, {0, 0, 5, 5}, "R1"}, {2, 1, 0, {0, 0, 5, 5}, "R2"}};
  const auto all = ground_truth_by_image(ds);
  CHECK(all.at(1).size() == 2);
  CHECK(all.at(2).empty());
  CHECK(ground_truth_by_image(ds, "R2").at(1).size() == 1);
}
