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

#include "ssldet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssldet/error.hpp"

namespace ssldet {

void OptimConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optimizer: lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("optimizer: momentum must lie in [0,1)");
  if (!(weight_decay >= 0)) throw ConfigError("optimizer: weight decay must be non-negative");
  if (!(lr_min >= 0 && lr_min <= lr)) throw ConfigError("optimizer: lr_min must lie in [0, lr]");
}

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) throw ConfigError("cosine_lr: total steps must be positive");
  if (t > total) throw ConfigError("cosine_lr: step " + std::to_string(t) + " beyond total " + std::to_string(total));
  if (t == 0) return lr_max;
  if (t == total) return lr_min;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

OptimState make_optim_state(const ParamStore& params, std::size_t total_steps) {
  OptimState s;
  s.total_steps = total_steps;
  for (const auto& [name, p] : params) s.velocity.emplace(name, Tensor(p.value.shape()));
  return s;
}

void sgd_step(ParamStore& params, OptimState& state, const OptimConfig& cfg, double lr) {
  if (state.total_steps > 0 && state.step >= state.total_steps) {
    throw Error("sgd_step: step counter would exceed total steps");
  }
  for (auto& [name, p] : params) {
    const auto it = state.velocity.find(name);
    if (it == state.velocity.end() || it->second.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw Error("sgd_step: missing gradient or optimizer state for '" + name + "'");
    }
    Tensor& v = it->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double w = p.value[i];
      double g = p.grad[i];
      if (!cfg.decoupled_weight_decay) g += cfg.weight_decay * w;
      v[i] = cfg.momentum * v[i] + g;
      double next = w - lr * v[i];
      if (cfg.decoupled_weight_decay) next -= lr * cfg.weight_decay * w;
      if (!std::isfinite(next)) throw DivergenceError("sgd_step: non-finite update for '" + name + "'");
      p.value[i] = next;
    }
    p.grad.fill(0.0);
  }
  ++state.step;
}

double scheduled_lr(LrSchedule schedule, const OptimConfig& cfg, std::size_t step, std::size_t total_steps,
                    std::size_t steps_per_epoch) {
  switch (schedule) {
    case LrSchedule::Constant: return cfg.lr;
    case LrSchedule::CosinePerStep: return cosine_lr(step, total_steps, cfg.lr, cfg.lr_min);
    case LrSchedule::CosinePerEpoch: {
      const std::size_t per = std::max<std::size_t>(1, steps_per_epoch);
      return cosine_lr(step / per, (total_steps + per - 1) / per, cfg.lr, cfg.lr_min);
    }
  }
  return cfg.lr;
}

}  // namespace ssldet
