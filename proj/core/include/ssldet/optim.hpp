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

#include <cstddef>
#include <string>
#include <unordered_map>

#include "ssldet/tensor.hpp"

namespace ssldet {

struct OptimConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_min = 0.0;
  /// false: decay is added to the gradient before momentum (L2-coupled).
  /// true: decay shrinks the weights directly, outside the momentum buffer.
  bool decoupled_weight_decay = false;

  void validate() const;
};

enum class LrSchedule { Constant, CosinePerStep, CosinePerEpoch };

/// lr_min + (lr_max - lr_min) * (1 + cos(pi t / T)) / 2, for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);

struct OptimState {
  std::unordered_map<std::string, Tensor> velocity;
  std::size_t step = 0;
  std::size_t total_steps = 0;  ///< 0 means unbounded
};

/// Zero velocities mirroring every parameter.
OptimState make_optim_state(const ParamStore& params, std::size_t total_steps = 0);

/// One SGD-with-momentum update at rate `lr`:
///   g' = g + wd*w;  v = mu*v + g';  w -= lr*v
/// then zeroes the gradients and advances the step counter.
void sgd_step(ParamStore& params, OptimState& state, const OptimConfig& cfg, double lr);

/// Learning rate for the given step under a schedule.
double scheduled_lr(LrSchedule schedule, const OptimConfig& cfg, std::size_t step, std::size_t total_steps,
                    std::size_t steps_per_epoch);

}  // namespace ssldet
