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

#include "ssldet/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "ssldet/error.hpp"
#include "ssldet/rng.hpp"

namespace ssldet {

void ContrastiveBatch::validate() const {
  if (embeddings.rank() != 2) throw ShapeError("ContrastiveBatch: embeddings must be (2N, D)");
  const std::size_t m = embeddings.dim(0), d = embeddings.dim(1);
  if (m < 2 || m % 2 != 0 || partner.size() != m) {
    throw ShapeError("ContrastiveBatch: need an even number (>= 2) of embeddings with one partner each");
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = partner[i];
    if (j >= m || j == i || partner[j] != i) throw Error("ContrastiveBatch: pairing is not a perfect matching");
    double n2 = 0;
    for (std::size_t k = 0; k < d; ++k) n2 += embeddings[i * d + k] * embeddings[i * d + k];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) throw Error("ContrastiveBatch: embeddings must have unit norm");
  }
}

ContrastiveBatch ContrastiveBatch::interleaved(const std::vector<Tensor>& first, const std::vector<Tensor>& second) {
  if (first.size() != second.size() || first.empty()) throw ShapeError("ContrastiveBatch: view lists must match");
  const std::size_t n = first.size(), d = first.front().size();
  ContrastiveBatch b{Tensor({2 * n, d}), std::vector<std::size_t>(2 * n)};
  for (std::size_t i = 0; i < n; ++i) {
    require_shape(first[i], {d}, "ContrastiveBatch");
    require_shape(second[i], {d}, "ContrastiveBatch");
    std::copy(first[i].values().begin(), first[i].values().end(), b.embeddings.data() + (2 * i) * d);
    std::copy(second[i].values().begin(), second[i].values().end(), b.embeddings.data() + (2 * i + 1) * d);
    b.partner[2 * i] = 2 * i + 1;
    b.partner[2 * i + 1] = 2 * i;
  }
  return b;
}

NtXentResult ntxent_loss(const ContrastiveBatch& batch, double temperature) {
  if (!(temperature > 0)) throw ConfigError("ntxent_loss: temperature must be positive");
  batch.validate();
  const std::size_t m = batch.embeddings.dim(0), d = batch.embeddings.dim(1);
  const double* z = batch.embeddings.data();

  std::vector<double> sim(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += z[i * d + k] * z[j * d + k];
      sim[i * m + j] = sim[j * m + i] = s / temperature;
    }
  }

  // coef(i,k) = d loss / d (s_ik / tau) contributed by anchor i.
  std::vector<double> coef(m * m, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) mx = std::max(mx, sim[i * m + k]);
    }
    double denom = 0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) denom += std::exp(sim[i * m + k] - mx);
    }
    const double lse = mx + std::log(denom);
    total += lse - sim[i * m + batch.partner[i]];
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) coef[i * m + k] = std::exp(sim[i * m + k] - lse);
    }
    coef[i * m + batch.partner[i]] -= 1.0;
  }

  NtXentResult r;
  // With a single pair the positive is the whole denominator.
  r.loss = m == 2 ? 0.0 : std::max(0.0, total / static_cast<double>(m));
  r.grad = Tensor(batch.embeddings.shape());
  const double scale = 1.0 / (static_cast<double>(m) * temperature);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double c = (coef[i * m + k] + coef[k * m + i]) * scale;
      if (c == 0.0) continue;
      for (std::size_t q = 0; q < d; ++q) r.grad[i * d + q] += c * z[k * d + q];
    }
  }
  if (!std::isfinite(r.loss) || !r.grad.all_finite()) throw DivergenceError("ntxent_loss: non-finite result");
  return r;
}

void SSLConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("ssl: temperature must be positive");
  if (batch_pairs < 2) throw ConfigError("ssl: batch_pairs must be at least 2");
  if (epochs < 0) throw ConfigError("ssl: epochs must be non-negative");
  optim.validate();
  augment.validate();
}

PretrainResult pretrain(ParamStore params, const EncoderConfig& encoder_cfg, const Dataset& unlabeled,
                        const SSLConfig& cfg) {
  cfg.validate();
  if (unlabeled.images.empty()) throw DataError("pretrain: unlabeled dataset is empty");
  const Encoder encoder(encoder_cfg);

  PretrainResult result;
  if (cfg.epochs == 0) {
    result.params = std::move(params);
    return result;
  }

  std::vector<ImageGrid> normalized;
  normalized.reserve(unlabeled.images.size());
  for (const auto& im : unlabeled.images) {
    if (!im.pixels) throw DataError("pretrain: image " + std::to_string(im.id) + " has no pixel data");
    normalized.push_back(hist_normalize(*im.pixels, cfg.augment.normalize));
  }

  const std::size_t n = normalized.size();
  std::size_t pairs = static_cast<std::size_t>(cfg.batch_pairs);
  if (pairs > n) {
    spdlog::warn("pretrain: batch of {} pairs exceeds {} images; clamping", pairs, n);
    pairs = n;
  }
  // A trailing single-image batch has no negatives and is skipped.
  std::vector<std::size_t> batch_sizes;
  for (std::size_t start = 0; start < n; start += pairs) {
    const std::size_t sz = std::min(pairs, n - start);
    if (sz >= 2) batch_sizes.push_back(sz);
  }
  if (batch_sizes.empty()) throw DataError("pretrain: need at least 2 unlabeled images");
  const std::size_t steps_per_epoch = batch_sizes.size();
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);

  OptimState state = make_optim_state(params, total_steps);
  params.zero_grad();

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, {0x5eedULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0;
    std::size_t start = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t sz = batch_sizes[b];
      std::vector<Encoder::Trace> traces;
      traces.reserve(2 * sz);
      std::vector<Tensor> first, second;
      for (std::size_t i = 0; i < sz; ++i) {
        const std::size_t idx = order[start + i];
        Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(unlabeled.images[idx].id),
                                       static_cast<std::uint64_t>(epoch)}));
        const ImageGrid v1 = ssl_view(normalized[idx], cfg.augment, rng);
        const ImageGrid v2 = ssl_view(normalized[idx], cfg.augment, rng);
        traces.push_back(encoder.forward(params, v1));
        first.push_back(traces.back().embedding);
        traces.push_back(encoder.forward(params, v2));
        second.push_back(traces.back().embedding);
      }
      start += sz;

      const auto batch = ContrastiveBatch::interleaved(first, second);
      const NtXentResult loss = ntxent_loss(batch, cfg.temperature);
      if (!std::isfinite(loss.loss)) {
        throw DivergenceError("pretrain: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(b + 1));
      }
      const std::size_t d = batch.embeddings.dim(1);
      for (std::size_t r = 0; r < traces.size(); ++r) {
        Tensor g({d}, std::vector<double>(loss.grad.data() + r * d, loss.grad.data() + (r + 1) * d));
        encoder.backward(params, traces[r], nullptr, &g);
      }
      const double lr = scheduled_lr(cfg.schedule, cfg.optim, state.step, total_steps, steps_per_epoch);
      sgd_step(params, state, cfg.optim, lr);
      epoch_loss += loss.loss;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    spdlog::debug("pretrain epoch {}/{}: loss {:.5f}", epoch + 1, cfg.epochs, result.epoch_loss.back());
  }
  result.params = std::move(params);
  return result;
}

}  // namespace ssldet
