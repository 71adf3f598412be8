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

#include "ssldet/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "ssldet/augment.hpp"
#include "ssldet/error.hpp"
#include "ssldet/optim.hpp"
#include "ssldet/rng.hpp"
#include "ssldet/sampling.hpp"

namespace ssldet {

namespace {

std::map<std::int64_t, ImageGrid> normalized_images(const Dataset& ds, NormalizeMode mode) {
  std::map<std::int64_t, ImageGrid> out;
  for (const auto& im : ds.images) {
    if (!im.pixels) throw DataError("image " + std::to_string(im.id) + " has no pixel data");
    out.emplace(im.id, hist_normalize(*im.pixels, mode));
  }
  return out;
}

double validation_map(const Detector& detector, const ParamStore& params, const std::map<std::int64_t, ImageGrid>& images,
                      const GroundTruthByImage& gts, const EvalConfig& eval) {
  DetectionsByImage dets;
  for (const auto& [id, img] : images) dets[id] = detector.predict_normalized(params, img);
  return evaluate(dets, gts, eval).map;
}

void scale(DetPrediction& p, double s) {
  for (double& v : p.logits.values()) v *= s;
  for (double& v : p.deltas.values()) v *= s;
}

}  // namespace

FinetuneResult finetune(const Detector& detector, const ParamStore& encoder_init, const Dataset& labeled,
                        const Dataset& val, const EvalConfig& eval) {
  const DetConfig& cfg = detector.config();
  cfg.validate();
  eval.validate();
  if (labeled.images.empty()) throw DataError("finetune: labeled set is empty");
  if (val.images.empty()) throw DataError("finetune: validation set is empty");

  FinetuneResult result{detector.init_from_encoder(encoder_init, cfg.seed), {}};
  if (cfg.max_epochs == 0) return result;

  const auto train_images = normalized_images(labeled, cfg.normalize);
  const auto val_images = normalized_images(val, cfg.normalize);
  const auto train_anns = labeled.annotations_by_image();
  const auto val_gts = ground_truth_by_image(val);

  ParamStore params = result.params.clone_values();
  OptimState state = make_optim_state(params);
  double best_map = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::int64_t> order;
    const std::uint64_t order_seed = derive_seed(cfg.seed, {0x0e0cULL, static_cast<std::uint64_t>(epoch)});
    if (cfg.oversample) {
      order = build_epoch_indices(labeled, SamplerConfig{cfg.oversample_threshold, order_seed});
    } else {
      order = labeled.image_ids();
      Rng shuffle_rng(order_seed);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    Rng flip_rng(derive_seed(cfg.seed, {0xf11bULL, static_cast<std::uint64_t>(epoch)}));

    double loss_sum = 0;
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const std::int64_t id = order[i];
        const auto& anns = train_anns.at(id);
        std::vector<Box> boxes;
        std::vector<int> classes;
        for (const auto& a : anns) {
          boxes.push_back(a.box);
          classes.push_back(detector.class_index(a.class_id));
        }
        Flipped f = random_hflip(train_images.at(id), std::move(boxes), cfg.flip_prob, flip_rng);
        const DetTargets targets = match_anchors(detector.anchors().anchors, f.boxes, classes, cfg);
        const auto trace = detector.forward(params, f.image);
        DetLoss loss = detection_loss(trace.pred, targets, cfg);
        if (!std::isfinite(loss.total)) {
          throw DivergenceError("finetune diverged at epoch " + std::to_string(epoch) + ", image " +
                                std::to_string(id) + ": loss=" + std::to_string(loss.total) +
                                " (cls=" + std::to_string(loss.cls) + ", box=" + std::to_string(loss.box) + ")");
        }
        loss_sum += loss.total;
        scale(loss.grad, inv);
        detector.backward(params, trace, loss.grad);
      }
      sgd_step(params, state, cfg.optim, cfg.optim.lr);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    const double val_map = validation_map(detector, params, val_images, val_gts, eval);
    result.log.train_loss.push_back(mean_loss);
    result.log.val_map.push_back(val_map);
    result.log.epochs_run = epoch;
    spdlog::debug("finetune epoch {}: loss {:.5f} val mAP {:.4f}", epoch, mean_loss, val_map);

    if (val_map > best_map) {
      best_map = val_map;
      since_best = 0;
      result.params = params.clone_values();
      result.log.best_epoch = epoch;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience && epoch >= cfg.min_epochs) {
      result.log.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  return result;
}

DetectionsByImage predict_dataset(const Detector& detector, const ParamStore& params, const Dataset& ds) {
  DetectionsByImage out;
  for (const auto& im : ds.images) {
    if (!im.pixels) throw DataError("image " + std::to_string(im.id) + " has no pixel data");
    out[im.id] = detector.predict(params, *im.pixels);
  }
  return out;
}

}  // namespace ssldet
