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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ssldet/data.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/eval.hpp"
#include "ssldet/geometry.hpp"
#include "ssldet/layers.hpp"
#include "ssldet/rng.hpp"
#include "ssldet/ssl.hpp"

using namespace ssldet;

namespace {

Tensor noise(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v = n(rng);
  return t;
}

Box random_box(Rng& rng, double extent) {
  std::uniform_real_distribution<double> pos(0.0, extent), side(2.0, extent / 4);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + side(rng), y + side(rng)};
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor x = noise({c, hw, hw}, rng), w = noise({2 * c, c, 3, 3}, rng), b = noise({2 * c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_forward(x, w, b));
}
BENCHMARK(BM_Conv2dForward)->Args({1, 64})->Args({8, 32})->Args({16, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), hw = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const Tensor x = noise({c, hw, hw}, rng), w = noise({2 * c, c, 3, 3}, rng), gy = noise({2 * c, hw, hw}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d_backward(x, w, gy));
}
BENCHMARK(BM_Conv2dBackward)->Args({1, 64})->Args({8, 32})->Args({16, 16});

void BM_EncoderForward(benchmark::State& state) {
  const EncoderConfig cfg;
  const Encoder enc(cfg);
  ParamStore params;
  enc.init(params, 3, true);
  Rng rng(3);
  const Tensor x = noise({1, static_cast<std::size_t>(cfg.input_size), static_cast<std::size_t>(cfg.input_size)}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(params, x, true));
}
BENCHMARK(BM_EncoderForward);

void BM_NtXent(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<Tensor> a, b;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(nn::l2_normalize_forward(noise({16}, rng)));
    b.push_back(nn::l2_normalize_forward(noise({16}, rng)));
  }
  const auto batch = ContrastiveBatch::interleaved(a, b);
  for (auto _ : state) benchmark::DoNotOptimize(ntxent_loss(batch, 0.5));
}
BENCHMARK(BM_NtXent)->Arg(8)->Arg(32)->Arg(128);

void BM_Nms(benchmark::State& state) {
  Rng rng(5);
  std::uniform_real_distribution<double> score(0, 1);
  std::vector<ScoredBox> dets;
  for (int i = 0; i < state.range(0); ++i) dets.push_back({random_box(rng, 64), i % 4, score(rng)});
  for (auto _ : state) benchmark::DoNotOptimize(nms(dets, 0.5));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(1000);

void BM_MatchAnchors(benchmark::State& state) {
  const AnchorGrid grid = AnchorGrid::make(64, 64, 8, {8, 16, 32});
  Rng rng(6);
  std::vector<Box> gts;
  std::vector<int> cls;
  for (int i = 0; i < 3; ++i) {
    gts.push_back(random_box(rng, 64));
    cls.push_back(i);
  }
  const DetConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(match_anchors(grid.anchors, gts, cls, cfg));
}
BENCHMARK(BM_MatchAnchors);

void BM_Evaluate(benchmark::State& state) {
  Rng rng(7);
  std::uniform_real_distribution<double> score(0, 1), jitter(-3, 3);
  DetectionsByImage dets;
  GroundTruthByImage gts;
  std::int64_t ann = 1;
  for (std::int64_t img = 0; img < state.range(0); ++img) {
    for (int k = 0; k < 3; ++k) {
      const Box b = random_box(rng, 64);
      gts[img].push_back({ann++, img, k % 4, b, std::nullopt});
      dets[img].push_back({{b.x1 + jitter(rng), b.y1 + jitter(rng), b.x2 + jitter(rng), b.y2 + jitter(rng)}, k % 4, score(rng)});
      dets[img].push_back({random_box(rng, 64), k % 4, score(rng)});
    }
  }
  const EvalConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(dets, gts, cfg));
}
BENCHMARK(BM_Evaluate)->Arg(100)->Arg(400);

}  // namespace

BENCHMARK_MAIN();
