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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssldet/detect.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/layers.hpp"
#include "ssldet/rng.hpp"
#include "ssldet/ssl.hpp"
#include "ssldet/tensor.hpp"

namespace ssldet::test {

inline constexpr double kFdStep = 1e-5;

/// Worst coordinate-wise |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// of a central-difference check on `x`. `x` is restored on return.
inline double fd_rel_error(std::span<double> x, std::span<const double> analytic, const std::function<double()>& f,
                           double h = kFdStep, double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, err);
  }
  return worst;
}

inline Tensor normal_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.values()) v = n(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline std::size_t draw(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Kink guards: the finite-difference step must not cross a ReLU hinge, a
// max-pool tie or an L1 corner.
inline constexpr double kKinkMargin = 1e-4;

inline bool relu_safe(const Tensor& pre) {
  return std::all_of(pre.values().begin(), pre.values().end(), [](double v) { return std::abs(v) > kKinkMargin; });
}

inline bool pool_safe(const Tensor& x) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; y += 2) {
      for (std::size_t xx = 0; xx < w; xx += 2) {
        double v[4] = {x.at(ch, y, xx), x.at(ch, y, xx + 1), x.at(ch, y + 1, xx), x.at(ch, y + 1, xx + 1)};
        std::sort(v, v + 4);
        if (v[3] > 0 && v[3] - v[2] <= kKinkMargin) return false;
      }
    }
  }
  return true;
}

inline bool encoder_safe(const Encoder& enc, const ParamStore& p, const Encoder::Trace& t) {
  for (std::size_t i = 0; i < t.stages.size(); ++i) {
    const std::string n = "encoder.conv" + std::to_string(i + 1) + ".";
    if (!relu_safe(nn::conv2d_forward(t.stages[i].input, p.value(n + "weight"), p.value(n + "bias")))) return false;
    if (!pool_safe(t.stages[i].activation)) return false;
  }
  for (std::size_t j = 0; j + 1 < t.mlp_pre.size(); ++j) {
    if (!relu_safe(t.mlp_pre[j])) return false;
  }
  (void)enc;
  return true;
}

// ---------------------------------------------------------------------------
// One random instance per call; each returns the worst relative error.

inline double check_conv2d(Rng& rng) {
  const std::size_t c = draw(rng, 1, 3), o = draw(rng, 1, 3), h = draw(rng, 3, 6), w = draw(rng, 3, 6);
  const std::size_t k = draw(rng, 0, 1) ? 3 : 1;
  Tensor x = normal_tensor({c, h, w}, rng), wt = normal_tensor({o, c, k, k}, rng), b = normal_tensor({o}, rng);
  const Tensor g = normal_tensor({o, h, w}, rng);
  const auto grads = nn::conv2d_backward(x, wt, g);
  auto f = [&] { return dot(nn::conv2d_forward(x, wt, b), g); };
  return std::max({fd_rel_error(x.values(), grads.input.values(), f), fd_rel_error(wt.values(), grads.weight.values(), f),
                   fd_rel_error(b.values(), grads.bias.values(), f)});
}

inline double check_relu(Rng& rng) {
  Tensor x({draw(rng, 1, 3), draw(rng, 1, 5), draw(rng, 1, 5)});
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  for (double& v : x.values()) v = (rng() & 1 ? 1 : -1) * mag(rng);
  const Tensor g = normal_tensor(x.shape(), rng);
  const Tensor a = nn::relu_backward(x, g);
  return fd_rel_error(x.values(), a.values(), [&] { return dot(nn::relu_forward(x), g); });
}

inline double check_maxpool2(Rng& rng) {
  const std::size_t c = draw(rng, 1, 3), h = 2 * draw(rng, 1, 3), w = 2 * draw(rng, 1, 3);
  Tensor x({c, h, w});
  // Distinct values 0.01 apart rule out ties.
  std::vector<double> vals(x.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i) - 0.3;
  std::shuffle(vals.begin(), vals.end(), rng);
  std::copy(vals.begin(), vals.end(), x.data());
  const auto pooled = nn::maxpool2_forward(x);
  const Tensor g = normal_tensor(pooled.output.shape(), rng);
  const Tensor a = nn::maxpool2_backward(x.shape(), pooled.argmax, g);
  return fd_rel_error(x.values(), a.values(), [&] { return dot(nn::maxpool2_forward(x).output, g); });
}

inline double check_global_avg_pool(Rng& rng) {
  Tensor x = normal_tensor({draw(rng, 1, 4), draw(rng, 1, 5), draw(rng, 1, 5)}, rng);
  const Tensor g = normal_tensor({x.dim(0)}, rng);
  const Tensor a = nn::global_avg_pool_backward(x.shape(), g);
  return fd_rel_error(x.values(), a.values(), [&] { return dot(nn::global_avg_pool_forward(x), g); });
}

inline double check_dense(Rng& rng) {
  const std::size_t in = draw(rng, 1, 6), out = draw(rng, 1, 6);
  Tensor x = normal_tensor({in}, rng), w = normal_tensor({out, in}, rng), b = normal_tensor({out}, rng);
  const Tensor g = normal_tensor({out}, rng);
  const auto grads = nn::dense_backward(x, w, g);
  auto f = [&] { return dot(nn::dense_forward(x, w, b), g); };
  return std::max({fd_rel_error(x.values(), grads.input.values(), f), fd_rel_error(w.values(), grads.weight.values(), f),
                   fd_rel_error(b.values(), grads.bias.values(), f)});
}

inline double check_l2_normalize(Rng& rng) {
  Tensor x = normal_tensor({draw(rng, 2, 8)}, rng);
  const Tensor g = normal_tensor(x.shape(), rng);
  const Tensor a = nn::l2_normalize_backward(x, g);
  return fd_rel_error(x.values(), a.values(), [&] { return dot(nn::l2_normalize_forward(x), g); });
}

/// NT-Xent through a row-wise L2 normalization, so perturbed inputs stay valid.
inline double check_ntxent(Rng& rng) {
  const std::size_t n = draw(rng, 2, 4), d = draw(rng, 2, 5);
  const double tau = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
  Tensor raw = normal_tensor({2 * n, d}, rng);
  auto batch_of = [&] {
    std::vector<Tensor> a, b;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      Tensor row({d}, std::vector<double>(raw.data() + i * d, raw.data() + (i + 1) * d));
      (i % 2 ? b : a).push_back(nn::l2_normalize_forward(row));
    }
    return ContrastiveBatch::interleaved(a, b);
  };
  const NtXentResult r = ntxent_loss(batch_of(), tau);
  Tensor analytic(raw.shape());
  for (std::size_t i = 0; i < 2 * n; ++i) {
    Tensor row({d}, std::vector<double>(raw.data() + i * d, raw.data() + (i + 1) * d));
    Tensor g({d}, std::vector<double>(r.grad.data() + i * d, r.grad.data() + (i + 1) * d));
    const Tensor gi = nn::l2_normalize_backward(row, g);
    std::copy(gi.values().begin(), gi.values().end(), analytic.data() + i * d);
  }
  return fd_rel_error(raw.values(), analytic.values(), [&] { return ntxent_loss(batch_of(), tau).loss; });
}

/// Loss-level check on random logits/offsets against anchor-matched targets.
inline double check_detection_loss(Rng& rng) {
  DetConfig cfg;
  cfg.box_loss_weight = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  const AnchorGrid grid = AnchorGrid::make(16, 16, 8, {6, 12});
  std::vector<Box> gts;
  std::vector<int> cls;
  std::uniform_real_distribution<double> pos(0.0, 10.0), side(3.0, 8.0);
  const std::size_t nc = draw(rng, 1, 3);
  for (std::size_t g = 0, ng = draw(rng, 0, 3); g < ng; ++g) {
    const double x = pos(rng), y = pos(rng);
    gts.push_back({x, y, std::min(16.0, x + side(rng)), std::min(16.0, y + side(rng))});
    cls.push_back(static_cast<int>(draw(rng, 0, nc - 1)));
  }
  const DetTargets targets = match_anchors(grid.anchors, gts, cls, cfg);
  DetPrediction pred{normal_tensor({grid.size(), nc + 1}, rng), normal_tensor({grid.size(), 4}, rng)};
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t k = 0; k < 4; ++k) {
      double& v = pred.deltas[a * 4 + k];
      if (std::abs(v - targets.deltas[a][k]) < 1e-3) v += 1e-2;
    }
  }
  const DetLoss l = detection_loss(pred, targets, cfg);
  auto f = [&] { return detection_loss(pred, targets, cfg).total; };
  return std::max(fd_rel_error(pred.logits.values(), l.grad.logits.values(), f),
                  fd_rel_error(pred.deltas.values(), l.grad.deltas.values(), f));
}

inline EncoderConfig tiny_encoder_config(Rng& rng) {
  EncoderConfig ec;
  ec.input_size = 8;
  ec.stage_channels = {static_cast<int>(draw(rng, 1, 3)), static_cast<int>(draw(rng, 2, 3))};
  ec.embedding_dim = ec.stage_channels.back();
  ec.projection_dims = {ec.embedding_dim, static_cast<int>(draw(rng, 2, 4)), static_cast<int>(draw(rng, 2, 3))};
  return ec;
}

inline std::vector<double> flat_grads(const ParamStore& p) {
  std::vector<double> v;
  for (const auto& [name, param] : p) v.insert(v.end(), param.grad.values().begin(), param.grad.values().end());
  return v;
}

/// Checks every parameter tensor against the flattened analytic gradient.
inline double fd_params(ParamStore& p, const std::vector<double>& analytic, const std::function<double()>& f) {
  double worst = 0;
  std::size_t offset = 0;
  for (auto& [name, param] : p) {
    const std::size_t n = param.value.size();
    worst = std::max(worst, fd_rel_error(param.value.values(), std::span(analytic).subspan(offset, n), f));
    offset += n;
  }
  return worst;
}

/// Scalar loss <c, embedding> + <d, features> through the whole encoder,
/// checked w.r.t. every parameter and the input. Redraws kinked instances.
inline double check_encoder(Rng& rng) {
  for (;;) {
    const EncoderConfig ec = tiny_encoder_config(rng);
    const Encoder enc(ec);
    ParamStore p;
    enc.init(p, rng(), true);
    for (auto& [name, param] : p) {
      if (name.find("bias") != std::string::npos) param.value = normal_tensor(param.value.shape(), rng, 0.1);
    }
    Tensor input = normal_tensor({1, 8, 8}, rng, 0.5);
    const auto t = enc.forward(p, input);
    if (!encoder_safe(enc, p, t)) continue;
    const Tensor c = normal_tensor(t.embedding.shape(), rng), d = normal_tensor(t.features.shape(), rng);
    p.zero_grad();
    enc.backward(p, t, &d, &c);
    const auto analytic = flat_grads(p);
    auto f = [&] {
      const auto u = enc.forward(p, input);
      return dot(u.embedding, c) + dot(u.features, d);
    };
    return fd_params(p, analytic, f);
  }
}

/// detection_loss end-to-end through head and encoder.
inline double check_detector(Rng& rng) {
  for (;;) {
    EncoderConfig ec = tiny_encoder_config(rng);
    ec.input_size = 16;
    DetConfig dc;
    dc.anchor_sizes = {4, 8};
    dc.head_channels = static_cast<int>(draw(rng, 2, 3));
    const Detector det(ec, dc, {0, 1});
    ParamStore p = det.init(rng());
    for (auto& [name, param] : p) {
      if (name.find("bias") != std::string::npos) param.value = normal_tensor(param.value.shape(), rng, 0.1);
    }
    ImageGrid img(16, 16);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.pixels) v = u(rng);
    const std::vector<Box> gts{{2, 3, 9, 11}, {8, 6, 15, 14}};
    const std::vector<int> cls{0, 1};
    const DetTargets targets = match_anchors(det.anchors().anchors, gts, cls, dc);

    const auto t = det.forward(p, img);
    if (!encoder_safe(det.encoder(), p, t.encoder)) continue;
    if (!relu_safe(nn::conv2d_forward(t.encoder.features, p.value("head.conv.weight"), p.value("head.conv.bias")))) continue;
    bool corner = false;
    for (std::size_t a = 0; a < targets.labels.size(); ++a) {
      if (targets.labels[a] <= 0) continue;
      for (std::size_t k = 0; k < 4; ++k) corner |= std::abs(t.pred.deltas[a * 4 + k] - targets.deltas[a][k]) < 1e-3;
    }
    if (corner) continue;

    const DetLoss l = detection_loss(t.pred, targets, dc);
    p.zero_grad();
    det.backward(p, t, l.grad);
    const auto analytic = flat_grads(p);
    return fd_params(p, analytic, [&] { return detection_loss(det.forward(p, img).pred, targets, dc).total; });
  }
}

struct GradientCase {
  const char* name;
  double (*check)(Rng&);
};

inline const std::vector<GradientCase>& gradient_cases() {
  static const std::vector<GradientCase> cases{
      {"conv2d", check_conv2d},       {"relu", check_relu},
      {"maxpool2", check_maxpool2},   {"global_avg_pool", check_global_avg_pool},
      {"dense", check_dense},         {"l2_normalize", check_l2_normalize},
      {"encoder", check_encoder},     {"ntxent", check_ntxent},
      {"detection_loss", check_detection_loss}, {"detector", check_detector},
  };
  return cases;
}

}  // namespace ssldet::test
