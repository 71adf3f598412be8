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

#include "ssldet/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "ssldet/checkpoint.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/error.hpp"
#include "ssldet/finetune.hpp"
#include "ssldet/rng.hpp"
#include "ssldet/ssl.hpp"

namespace ssldet {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::vector<int> category_ids(const Dataset& ds) {
  std::vector<int> ids;
  for (const auto& c : ds.categories) ids.push_back(c.id);
  return ids;
}

std::string csv_series(const std::vector<double>& v, const std::string& header) {
  std::string out = header + "\n";
  for (std::size_t i = 0; i < v.size(); ++i) out += std::to_string(i + 1) + "," + num(v[i]) + "\n";
  return out;
}

std::string finetune_log_csv(const FinetuneLog& log) {
  std::string out = "epoch,train_loss,val_mAP\n";
  for (std::size_t i = 0; i < log.train_loss.size(); ++i) {
    out += std::to_string(i + 1) + "," + num(log.train_loss[i]) + "," + num(log.val_map[i]) + "\n";
  }
  return out;
}

// Fine-tunes, evaluates on the test split and persists the run artifacts.
void finish_run(RunRecord& rec, const ExperimentConfig& cfg, const PreparedData& data, const ParamStore& encoder_init,
                const Dataset& labeled, std::uint64_t det_seed) {
  const fs::path dir = cfg.output.dir / rec.run_id;
  DetConfig det = cfg.det;
  det.seed = det_seed;
  const Detector detector(cfg.encoder, det, category_ids(data.fused));
  FinetuneResult ft = finetune(detector, encoder_init, labeled, data.split.val, cfg.eval);
  const fs::path ckpt = dir / "detector.ckpt";
  save_checkpoint(ft.params, ckpt);
  rec.checkpoints.push_back(ckpt);
  write_text(dir / "finetune_log.csv", finetune_log_csv(ft.log));

  const DetectionsByImage dets = predict_dataset(detector, ft.params, data.split.test);
  const GroundTruthByImage gts = ground_truth_by_image(data.split.test);
  rec.metrics = evaluate(dets, gts, cfg.eval);
  rec.agreement = model_gt_iou(gts, dets, cfg.eval);
  write_text(dir / "metrics.json", metrics_to_json(*rec.metrics));
  if (cfg.output.save_detections) save_detections(dets, dir / "detections.json");
}

template <class F>
RunRecord guarded(const std::string& id, F&& body) {
  RunRecord rec;
  rec.run_id = id;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(rec);
  } catch (const DivergenceError& e) {
    rec.metrics.reset();
    rec.error = e.what();
    rec.error_code = 3;
  } catch (const ConfigError& e) {
    rec.metrics.reset();
    rec.error = e.what();
    rec.error_code = 1;
  } catch (const Error& e) {
    rec.metrics.reset();
    rec.error = e.what();
    rec.error_code = 2;
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rec.ok()) {
    spdlog::info("{}: mAP {:.4f} mAP50 {:.4f} ({} labeled images, {:.1f}s)", id, rec.metrics->map,
                 rec.metrics->map50, rec.train_images, rec.seconds);
  } else {
    spdlog::error("{} failed: {}", id, rec.error);
  }
  return rec;
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string run_id(const std::string& kind, double fraction) { return kind + "@" + short_num(fraction); }

std::uint64_t run_seed(const ExperimentConfig& cfg, const std::string& tag) {
  return derive_seed(cfg.seed, {hash_string(tag)});
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  cfg.validate();
  PreparedData out;
  if (cfg.data.synthetic) {
    SynthConfig synth = cfg.data.synth;
    synth.seed = run_seed(cfg, "data");
    out.raw = generate_synthetic(synth);
  } else {
    out.raw = load_dataset(cfg.data.annotations,
                           cfg.data.image_dir.empty() ? std::nullopt : std::optional<fs::path>(cfg.data.image_dir));
  }
  const bool has_raters = std::any_of(out.raw.annotations.begin(), out.raw.annotations.end(),
                                      [](const Annotation& a) { return a.rater_id.has_value(); });
  out.fused = has_raters ? fuse_dataset(out.raw, cfg.data.fuse_iou) : out.raw;
  SplitSpec split = cfg.split;
  split.seed = run_seed(cfg, "split");
  out.split = split_dataset(out.fused, split);
  return out;
}

RunRecord run_baseline(const ExperimentConfig& cfg, const PreparedData& data) {
  return guarded("baseline", [&](RunRecord& rec) {
    cfg.validate();
    rec.label_fraction = 1.0;
    rec.train_images = data.split.train.images.size();
    const std::uint64_t seed = run_seed(cfg, rec.run_id);
    ParamStore encoder;
    Encoder(cfg.encoder).init(encoder, derive_seed(seed, {0xe4cULL}), /*with_projection=*/false);
    finish_run(rec, cfg, data, encoder, data.split.train, derive_seed(seed, {0xde7ULL}));
  });
}

RunRecord run_ssl_fraction(const ExperimentConfig& cfg, const PreparedData& data, double fraction, bool scratch) {
  return guarded(run_id(scratch ? "scratch" : "ssl", fraction), [&](RunRecord& rec) {
    cfg.validate();
    if (!(fraction > 0 && fraction < 1)) throw ConfigError("label-budget fraction must lie in (0,1)");
    // Shared by the SSL and scratch runs at one fraction.
    const std::uint64_t seed = run_seed(cfg, "budget@" + short_num(fraction));
    const BudgetPartition part = partition_label_budget(data.split.train, {fraction, derive_seed(seed, {0xb0dULL})});
    rec.label_fraction = 1.0 - fraction;
    rec.train_images = part.finetune.images.size();
    rec.pretrain_images = part.pretrain.images.size();

    const fs::path dir = cfg.output.dir / rec.run_id;
    ParamStore encoder;
    Encoder(cfg.encoder).init(encoder, derive_seed(seed, {0xe4cULL}), /*with_projection=*/!scratch);
    if (!scratch) {
      SSLConfig ssl = cfg.ssl;
      ssl.seed = derive_seed(seed, {0x551ULL});
      PretrainResult pre = pretrain(std::move(encoder), cfg.encoder, part.pretrain, ssl);
      encoder = std::move(pre.params);
      const fs::path ckpt = dir / "encoder.ckpt";
      save_checkpoint(encoder, ckpt);
      rec.checkpoints.push_back(ckpt);
      write_text(dir / "pretrain_loss.csv", csv_series(pre.epoch_loss, "epoch,loss"));
    }
    finish_run(rec, cfg, data, encoder, part.finetune, derive_seed(seed, {0xde7ULL}));
  });
}

std::vector<AgreementRow> rater_agreement(const Dataset& raw, const EvalConfig& eval) {
  std::set<std::string> raters;
  for (const auto& a : raw.annotations) {
    if (a.rater_id) raters.insert(*a.rater_id);
  }
  if (raters.size() < 2) throw DataError("agreement needs annotations from at least two raters");
  std::vector<std::string> names(raters.begin(), raters.end());
  std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  std::map<std::string, GroundTruthByImage> by_rater;
  for (const auto& n : names) by_rater[n] = ground_truth_by_image(raw, n);

  std::vector<AgreementRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      const auto r = interobserver_iou(by_rater[names[i]], by_rater[names[j]], eval);
      rows.push_back({names[i] + "~" + names[j], r.value_or(AgreementReport{})});
    }
  }
  return rows;
}

std::vector<AgreementRow> run_agreement(const ExperimentConfig& cfg, const PreparedData& data,
                                        const std::vector<std::string>& run_ids) {
  std::vector<AgreementRow> rows;
  const bool has_raters = std::any_of(data.raw.annotations.begin(), data.raw.annotations.end(),
                                      [](const Annotation& a) { return a.rater_id.has_value(); });
  if (has_raters) rows = rater_agreement(data.raw, cfg.eval);

  DetConfig det = cfg.det;
  const Detector detector(cfg.encoder, det, category_ids(data.fused));
  const GroundTruthByImage gts = ground_truth_by_image(data.split.test);
  for (const auto& id : run_ids) {
    const fs::path ckpt = cfg.output.dir / id / "detector.ckpt";
    if (!fs::exists(ckpt)) continue;
    const ParamStore params = load_checkpoint(ckpt);
    rows.push_back({"model:" + id, model_gt_iou(gts, predict_dataset(detector, params, data.split.test), cfg.eval)});
  }
  return rows;
}

bool SweepResult::all_ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.ok(); });
}

std::string summary_csv(const std::vector<RunRecord>& runs, bool with_seconds) {
  std::string out = "run,label_fraction,train_images,mAP,mAP50,mAP_small,AR,AR_small,mean_iou,iou_sigma,seconds\n";
  for (const auto& r : runs) {
    out += r.run_id + "," + short_num(r.label_fraction) + "," + std::to_string(r.train_images) + ",";
    if (r.metrics) {
      const auto& m = *r.metrics;
      out += num(m.map) + "," + num(m.map50) + "," + num(m.map_small) + "," + num(m.ar) + "," + num(m.ar_small) + ",";
    } else {
      out += ",,,,,";
    }
    out += (r.agreement ? num(r.agreement->mean) + "," + num(r.agreement->sigma) : std::string(",")) + ",";
    if (with_seconds) out += num(r.seconds);
    out += "\n";
  }
  return out;
}

std::string per_class_csv(const std::vector<RunRecord>& runs, const Dataset& ds) {
  std::map<int, std::string> names;
  for (const auto& c : ds.categories) names[c.id] = c.name;
  std::string out = "run,category_id,category,n_gt,AP,AP50\n";
  for (const auto& r : runs) {
    if (!r.metrics) continue;
    for (const auto& c : r.metrics->per_class) {
      out += r.run_id + "," + std::to_string(c.category_id) + "," + names[c.category_id] + "," +
             std::to_string(c.n_gt) + "," + num(c.ap) + "," + num(c.ap50) + "\n";
    }
  }
  return out;
}

std::string agreement_csv(const std::vector<AgreementRow>& rows) {
  std::string out = "source,mean_iou,sigma,count\n";
  for (const auto& r : rows) {
    out += r.source + "," + num(r.report.mean) + "," + num(r.report.sigma) + "," + std::to_string(r.report.count) + "\n";
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  fs::create_directories(cfg.output.dir);
  write_text(cfg.output.dir / "config.ini", to_ini(cfg));
  spdlog::info("sweep: {} train / {} val / {} test images", data.split.train.images.size(),
               data.split.val.images.size(), data.split.test.images.size());

  SweepResult result;
  if (cfg.run_baseline) result.runs.push_back(run_baseline(cfg, data));
  for (double f : cfg.fractions) result.runs.push_back(run_ssl_fraction(cfg, data, f, false));
  if (cfg.scratch) {
    const std::vector<double>& fracs = cfg.scratch_fractions.empty() ? cfg.fractions : cfg.scratch_fractions;
    for (double f : fracs) result.runs.push_back(run_ssl_fraction(cfg, data, f, true));
  }

  std::vector<std::string> ids;
  for (const auto& r : result.runs) {
    if (r.ok()) ids.push_back(r.run_id);
  }
  result.agreement = run_agreement(cfg, data, ids);

  write_text(cfg.output.dir / "summary.csv", summary_csv(result.runs, cfg.output.record_wall_clock));
  write_text(cfg.output.dir / "per_class_ap.csv", per_class_csv(result.runs, data.fused));
  write_text(cfg.output.dir / "agreement.csv", agreement_csv(result.agreement));
  return result;
}

}  // namespace ssldet
