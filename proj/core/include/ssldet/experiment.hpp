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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssldet/config.hpp"
#include "ssldet/data.hpp"
#include "ssldet/eval.hpp"

namespace ssldet {

/// Dataset after loading or generation, rater fusion and the three-way split.
struct PreparedData {
  Dataset raw;    ///< as generated or loaded, rater boxes intact
  Dataset fused;  ///< one box per object
  DatasetSplit split;
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct RunRecord {
  std::string run_id;
  double label_fraction = 1.0;  ///< share of the train split that keeps labels
  std::size_t train_images = 0;
  std::size_t pretrain_images = 0;
  std::vector<std::filesystem::path> checkpoints;
  std::optional<MetricsReport> metrics;
  std::optional<AgreementReport> agreement;  ///< model vs fused test GT
  double seconds = 0;
  std::string error;
  int error_code = 0;  ///< CLI exit code class of the failure, 0 on success

  bool ok() const { return metrics.has_value(); }
};

/// "ssl@0.6", "scratch@0.6".
std::string run_id(const std::string& kind, double fraction);

/// Seed of a run, derived from the global seed and a run-group tag.
std::uint64_t run_seed(const ExperimentConfig& cfg, const std::string& tag);

RunRecord run_baseline(const ExperimentConfig& cfg, const PreparedData& data);
/// SSL pretraining on `fraction` of the train split, fine-tuning on the rest.
/// With `scratch` set the encoder stays random; data order and head init match
/// the SSL run at the same fraction.
RunRecord run_ssl_fraction(const ExperimentConfig& cfg, const PreparedData& data, double fraction,
                           bool scratch = false);

struct AgreementRow {
  std::string source;  ///< "R1~R2" or "model:<run id>"
  AgreementReport report;
};

/// Rater-pair agreement rows (empty without rater ids) followed by model rows
/// for every run directory holding a detector checkpoint.
std::vector<AgreementRow> run_agreement(const ExperimentConfig& cfg, const PreparedData& data,
                                        const std::vector<std::string>& run_ids);

/// Rater-pair rows only; throws DataError when the dataset has fewer than two raters.
std::vector<AgreementRow> rater_agreement(const Dataset& raw, const EvalConfig& eval);

struct SweepResult {
  std::vector<RunRecord> runs;
  std::vector<AgreementRow> agreement;
  bool all_ok() const;
};

/// Baseline, one SSL run per fraction and the optional scratch runs. Failures
/// are recorded per run. Writes summary.csv, per_class_ap.csv and agreement.csv.
SweepResult run_sweep(const ExperimentConfig& cfg);

std::string summary_csv(const std::vector<RunRecord>& runs, bool with_seconds);
std::string per_class_csv(const std::vector<RunRecord>& runs, const Dataset& ds);
std::string agreement_csv(const std::vector<AgreementRow>& rows);

/// Writes `text` atomically enough for our purposes (create dirs, truncate, write).
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace ssldet
