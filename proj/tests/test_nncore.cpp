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
#include <iterator>

#include "gradcheck.hpp"
#include "ssldet/checkpoint.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/error.hpp"
#include "support.hpp"

using namespace ssldet;

TEST_CASE("analytic gradients match central differences") {
  for (const auto& c : test::gradient_cases()) {
    Rng rng(derive_seed(11, {hash_string(c.name)}));
    double worst = 0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, c.check(rng));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("relu example") {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  CHECK(nn::relu_forward(x) == Tensor({3}, {0.0, 0.0, 2.0}));
  CHECK(nn::relu_backward(x, Tensor({3}, 1.0)) == Tensor({3}, {0.0, 0.0, 1.0}));
}

TEST_CASE("identity conv kernel preserves the input") {
  Rng rng(1);
  const Tensor x = test::random_tensor({2, 5, 6}, rng);
  Tensor w({2, 2, 3, 3});
  w[(0 * 2 + 0) * 9 + 4] = 1.0;
  w[(1 * 2 + 1) * 9 + 4] = 1.0;
  const Tensor y = nn::conv2d_forward(x, w, Tensor({2}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("layer shape errors") {
  CHECK_THROWS_AS(nn::conv2d_forward(Tensor({1, 4, 4}), Tensor({1, 2, 3, 3}), Tensor({1})), ShapeError);
  CHECK_THROWS_AS(nn::maxpool2_forward(Tensor({1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(nn::dense_forward(Tensor({3}), Tensor({2, 4}), Tensor({2})), ShapeError);
  CHECK_THROWS_AS(nn::l2_normalize_forward(Tensor({3})), DivergenceError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST_CASE("maxpool and global pooling values") {
  const Tensor x({1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7});
  const auto p = nn::maxpool2_forward(x);
  CHECK(p.output == Tensor({1, 1, 2}, {5, 8}));
  CHECK(nn::global_avg_pool_forward(x) == Tensor({1}, {30.0 / 8}));
}

TEST_CASE("encoder contract") {
  const EncoderConfig cfg;
  const Encoder enc(cfg);
  ParamStore a, b, c;
  enc.init(a, 5);
  enc.init(b, 5);
  enc.init(c, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (const auto& [name, p] : a) {
    if (name.find("bias") != std::string::npos) {
      CHECK(std::all_of(p.value.values().begin(), p.value.values().end(), [](double v) { return v == 0.0; }));
    }
  }
  // He fan-in scaling: variance 2 / fan_in.
  const Tensor& w = b.value("encoder.conv3.weight");
  double ss = 0;
  for (double v : w.values()) ss += v * v;
  CHECK(ss / static_cast<double>(w.size()) == doctest::Approx(2.0 / (16 * 9)).epsilon(0.15));

  Rng rng(3);
  std::vector<ImageGrid> batch;
  for (int i = 0; i < 4; ++i) {
    ImageGrid img(64, 64);
    for (double& v : img.pixels) v = uniform(rng, 0.0, 1.0);
    batch.push_back(img);
  }
  batch.push_back(batch[0]);
  const auto out = encoder_forward(a, cfg, batch);
  CHECK(out.features.shape() == Shape{5, 32, 8, 8});
  CHECK(out.embeddings.shape() == Shape{5, 16});
  for (std::size_t i = 0; i < 5; ++i) {
    double n2 = 0;
    for (std::size_t k = 0; k < 16; ++k) n2 += out.embeddings[i * 16 + k] * out.embeddings[i * 16 + k];
    CHECK(std::abs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
  for (std::size_t k = 0; k < 16; ++k) CHECK(out.embeddings[4 * 16 + k] == out.embeddings[k]);
  CHECK_THROWS_AS(encoder_forward(a, cfg, std::vector<ImageGrid>{ImageGrid(32, 32)}), ShapeError);
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.input_size = 60;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.projection_dims = {16, 8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = EncoderConfig{};
  cfg.kernel = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("param store") {
  ParamStore p;
  p.add("a", Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(p.add("a", Tensor({1})), Error);
  CHECK_THROWS_AS(p.get("b"), Error);
  p.grad("a")[0] = 3;
  ParamStore q = p.clone_values();
  CHECK(q.value("a") == p.value("a"));
  CHECK(q.get("a").grad[0] == 0.0);
  q.grad("a")[1] = 1;
  p.accumulate_grad(q, 2.0);
  CHECK(p.get("a").grad == Tensor({2}, {3, 2}));
  p.zero_grad();
  CHECK(p.get("a").grad == Tensor({2}));
  CHECK(p.scalar_count() == 2);
}

TEST_CASE("checkpoint round trip") {
  test::TempDir dir;
  const auto path = dir.path() / "m.ckpt";
  ParamStore p;
  Encoder(EncoderConfig{}).init(p, 9);
  p.add("odd", Tensor({1}, {std::nextafter(1.0, 2.0)}));
  save_checkpoint(p, path);
  const ParamStore q = load_checkpoint(path);
  CHECK(q == p);
  std::vector<std::string> names_p, names_q;
  for (const auto& [n, v] : p) names_p.push_back(n);
  for (const auto& [n, v] : q) names_q.push_back(n);
  CHECK(names_p == names_q);
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_CASE("checkpoint corruption is reported") {
  test::TempDir dir;
  const auto path = dir.path() / "m.ckpt";
  ParamStore p;
  p.add("w", Tensor({3}, {1, 2, 3}));
  save_checkpoint(p, path);
  const std::string good = slurp(path);

  std::string bad = good;
  bad[0] = 'X';
  spit(path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), FormatError);

  bad = good;
  bad[7] = '9';
  spit(path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), FormatError);

  spit(path, good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  bad = good;
  bad[good.size() - 6] ^= 0x40;
  spit(path, bad);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.ckpt"), FormatError);
}

TEST_CASE("encoder checkpoint loads into a detector") {
  const EncoderConfig ec;
  ParamStore pre;
  Encoder(ec).init(pre, 77, true);
  const Detector det(ec, DetConfig{}, {0, 1, 2, 3});
  const ParamStore fresh = det.init(5);
  const ParamStore loaded = det.init_from_encoder(pre, 5);
  for (const auto& [name, p] : loaded) {
    if (name.rfind("encoder.", 0) == 0) {
      CHECK(p.value == pre.value(name));
    } else {
      CHECK(p.value == fresh.value(name));
    }
  }
  CHECK_FALSE(loaded.contains("projection.fc1.weight"));

  ParamStore wrong;
  wrong.add("encoder.conv1.weight", Tensor({1}));
  ParamStore target = det.init(1);
  CHECK_THROWS_AS(load_prefixed(target, wrong), FormatError);
  ParamStore stray;
  stray.add("encoder.extra", Tensor({1}));
  CHECK_THROWS_AS(load_prefixed(target, stray), FormatError);
}
