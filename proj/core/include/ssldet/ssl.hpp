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
#include <vector>

#include "ssldet/augment.hpp"
#include "ssldet/data.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/optim.hpp"

namespace ssldet {

/// 2N unit-norm embeddings with a perfect matching of positive partners.
struct ContrastiveBatch {
  Tensor embeddings;  ///< (2N, D)
  std::vector<std::size_t> partner;

  void validate() const;

  /// Rows 2i and 2i+1 hold the two views of sample i.
  static ContrastiveBatch interleaved(const std::vector<Tensor>& first, const std::vector<Tensor>& second);
};

struct NtXentResult {
  double loss = 0;
  Tensor grad;  ///< d loss / d embeddings, same shape as the batch
};

/// Normalized temperature-scaled cross entropy. For each anchor i with partner j:
///   l(i) = -log( exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau) ),  s = dot product
/// and the loss is the mean of l over all 2N anchors.
NtXentResult ntxent_loss(const ContrastiveBatch& batch, double temperature);

struct SSLConfig {
  double temperature = 0.5;
  int batch_pairs = 32;
  int epochs = 30;
  OptimConfig optim{0.001, 0.9, 5e-4, 0.0, false};
  LrSchedule schedule = LrSchedule::CosinePerStep;
  AugmentSpec augment;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainResult {
  ParamStore params;
  std::vector<double> epoch_loss;  ///< mean batch loss per epoch
};

/// Contrastive pretraining of encoder + projection head on unlabeled images.
PretrainResult pretrain(ParamStore params, const EncoderConfig& encoder, const Dataset& unlabeled,
                        const SSLConfig& cfg);

}  // namespace ssldet
