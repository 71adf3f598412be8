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

#include <vector>

#include "ssldet/data.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/eval.hpp"
#include "ssldet/tensor.hpp"

namespace ssldet {

struct FinetuneLog {
  std::vector<double> train_loss;  ///< mean per-image loss, one entry per epoch
  std::vector<double> val_map;     ///< validation mAP@[.5,.95] after each epoch
  int best_epoch = 0;              ///< 0 means the initial weights were never beaten
  int epochs_run = 0;
  bool stopped_early = false;
};

struct FinetuneResult {
  ParamStore params;
  FinetuneLog log;
};

/// Trains the detector head and encoder on `labeled`, starting from the
/// `encoder.*` tensors of `encoder_init` and a fresh head seeded by
/// `detector.config().seed`. Returns the weights with the best validation mAP.
FinetuneResult finetune(const Detector& detector, const ParamStore& encoder_init, const Dataset& labeled,
                        const Dataset& val, const EvalConfig& eval);

/// Detections for every image of `ds`, keyed by image id.
DetectionsByImage predict_dataset(const Detector& detector, const ParamStore& params, const Dataset& ds);

}  // namespace ssldet
