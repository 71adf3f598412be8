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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssldet/data.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/encoder.hpp"
#include "ssldet/eval.hpp"
#include "ssldet/ssl.hpp"

namespace ssldet {

struct DataSourceConfig {
  /// true: generate with `synth`; false: load `annotations` (+ `image_dir`).
  bool synthetic = true;
  SynthConfig synth = SynthConfig::long_tail_default();
  std::filesystem::path annotations;
  std::filesystem::path image_dir;
  double fuse_iou = 0.2;
};

struct OutputConfig {
  std::filesystem::path dir = "runs";
  /// Fill the `seconds` column of summary.csv. Off keeps the file reproducible.
  bool record_wall_clock = false;
  bool save_detections = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DataSourceConfig data;
  SplitSpec split;
  std::vector<double> fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool run_baseline = true;
  bool scratch = false;
  /// Fractions that get a scratch run; empty means all of `fractions`.
  std::vector<double> scratch_fractions;
  EncoderConfig encoder;
  SSLConfig ssl;
  DetConfig det;
  EvalConfig eval;
  OutputConfig output;

  void validate() const;
};

/// Parses INI text. Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& ini_text);

/// Reads the file (if given), then applies `section.key=value` overrides in order.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::string>& overrides = {});

/// Applies one `section.key=value` override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// Full INI rendering of every key; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const ExperimentConfig& cfg);

/// Every accepted `section.key`, in rendering order.
std::vector<std::string> config_keys();

}  // namespace ssldet
