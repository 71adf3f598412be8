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

#include <fstream>
#include <set>

#include "ssldet/config.hpp"
#include "ssldet/error.hpp"
#include "support.hpp"

using namespace ssldet;

TEST_CASE("defaults") {
  const ExperimentConfig cfg;
  CHECK(cfg.ssl.temperature == 0.5);
  CHECK(cfg.ssl.epochs == 30);
  CHECK(cfg.ssl.optim.lr == 0.001);
  CHECK(cfg.ssl.optim.weight_decay == 5e-4);
  CHECK(cfg.det.optim.lr == 0.001);
  CHECK(cfg.det.optim.weight_decay == 1e-4);
  CHECK(cfg.det.optim.momentum == 0.9);
  CHECK(cfg.det.batch_size == 8);
  CHECK(cfg.det.patience == 5);
  CHECK(cfg.eval.iou_thresholds.size() == 10);
  CHECK(cfg.eval.max_detections == 100);
  CHECK(cfg.data.synth.n_images == 2000);
  CHECK(cfg.data.synth.classes.size() == 4);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("parse values") {
  const auto cfg = parse_config(R"(
[experiment]
seed = 42
run_baseline = false
output_dir = out/here

[synthetic]
images = 50
classes = a:disc:3:6:10, b:bar:1:8:16

[sweep]
fractions = 0.25, 0.5
scratch = true

[ssl]
schedule = cosine_epoch
crop_scale = 0.3, 0.9
normalize = minmax

[detect]
anchor_sizes = 4, 8
oversample = no
)");
  CHECK(cfg.seed == 42);
  CHECK_FALSE(cfg.run_baseline);
  CHECK(cfg.output.dir == "out/here");
  CHECK(cfg.data.synth.n_images == 50);
  REQUIRE(cfg.data.synth.classes.size() == 2);
  CHECK(cfg.data.synth.classes[1].shape == ShapeKind::Bar);
  CHECK(cfg.data.synth.classes[0].weight == 3.0);
  CHECK(cfg.fractions == std::vector<double>{0.25, 0.5});
  CHECK(cfg.scratch);
  CHECK(cfg.ssl.schedule == LrSchedule::CosinePerEpoch);
  CHECK(cfg.ssl.augment.crop_scale.lo == 0.3);
  CHECK(cfg.ssl.augment.normalize == NormalizeMode::MinMax);
  CHECK(cfg.det.anchor_sizes == std::vector<double>{4, 8});
  CHECK_FALSE(cfg.det.oversample);
}

TEST_CASE("config errors") {
  CHECK_THROWS_WITH_AS(parse_config("[ssl]\ntemprature = 0.5\n"), doctest::Contains("ssl.temprature"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ssl]\ntemperature = warm\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ssl]\nepochs = 3.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[ssl]\nschedule = linear\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[synthetic]\nclasses = a:blob:1:2:3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);

  CHECK_THROWS_AS(load_config(std::nullopt, {"sweep.fractions=0.5,0.2"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"split.train=0.9"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"ssl.blur_kernel=4"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"detect.neg_iou=0.7"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"eval.iou_thresholds=0.7,0.5"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::nullopt, {"no_equals_sign"}), ConfigError);
  CHECK_THROWS_AS(load_config(std::filesystem::path("/nonexistent/config.ini")), ConfigError);
}

TEST_CASE("overrides apply after the file") {
  test::TempDir dir;
  const auto path = dir.path() / "c.ini";
  std::ofstream(path) << "[experiment]\nseed = 3\n[detect]\nmax_epochs = 4\n";
  const auto cfg = load_config(path, {"experiment.seed=9", "ssl.epochs=2"});
  CHECK(cfg.seed == 9);
  CHECK(cfg.det.max_epochs == 4);
  CHECK(cfg.ssl.epochs == 2);
}

TEST_CASE("to_ini round trips") {
  ExperimentConfig cfg;
  apply_override(cfg, "experiment.seed=12345678901");
  apply_override(cfg, "ssl.lr=0.1");
  apply_override(cfg, "eval.small_area=1000.5");
  apply_override(cfg, "synthetic.classes=x:ring:0.3:5:9,y:cross:0.7:6:12");
  apply_override(cfg, "sweep.scratch_fractions=0.3");
  apply_override(cfg, "data.source=files");
  apply_override(cfg, "data.annotations=/tmp/a.json");
  const std::string text = to_ini(cfg);
  const auto back = parse_config(text);
  CHECK(to_ini(back) == text);
  CHECK(back.seed == 12345678901ULL);
  CHECK(back.ssl.optim.lr == 0.1);
  CHECK(back.eval.small_area == 1000.5);
  CHECK_FALSE(back.data.synthetic);
  CHECK(back.data.annotations == "/tmp/a.json");
  CHECK(back.data.synth.classes[0].weight == 0.3);
  CHECK(back.eval.iou_thresholds == cfg.eval.iou_thresholds);
}

TEST_CASE("every key appears once in the serialized form") {
  const auto keys = config_keys();
  CHECK(std::set<std::string>(keys.begin(), keys.end()).size() == keys.size());
  const std::string text = to_ini(ExperimentConfig{});
  for (const auto& k : keys) {
    const auto dot = k.find('.');
    CHECK(text.find("[" + k.substr(0, dot) + "]") != std::string::npos);
    CHECK(text.find("\n" + k.substr(dot + 1) + " = ") != std::string::npos);
  }
}

TEST_CASE("shipped configs load") {
  for (const char* name : {"default.ini", "acceptance.ini"}) {
    INFO(name);
    const auto path = std::filesystem::path(SSLDET_SOURCE_DIR) / "configs" / name;
    CHECK_NOTHROW(load_config(path));
  }
}
