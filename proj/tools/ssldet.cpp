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

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ssldet/checkpoint.hpp"
#include "ssldet/config.hpp"
#include "ssldet/data.hpp"
#include "ssldet/detect.hpp"
#include "ssldet/error.hpp"
#include "ssldet/eval.hpp"
#include "ssldet/experiment.hpp"
#include "ssldet/finetune.hpp"
#include "ssldet/rng.hpp"
#include "ssldet/ssl.hpp"

namespace fs = std::filesystem;
using namespace ssldet;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kData = 2, kDivergence = 3, kPartial = 4 };

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
  std::string out;
  bool verbose = false;

  ExperimentConfig load() const {
    std::vector<std::string> all = overrides;
    if (!out.empty()) all.push_back("experiment.output_dir=" + out);
    return load_config(config, all);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "INI config file")->check(CLI::ExistingFile);
  app->add_option("-s,--set", c.overrides, "Override as section.key=value (repeatable, wins over the file)");
  app->add_option("-o,--out", c.out, "Output directory (experiment.output_dir)");
  app->add_flag("-v,--verbose", c.verbose, "Debug logging");
}

std::optional<fs::path> opt_dir(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

std::vector<int> category_ids(const Dataset& ds) {
  std::vector<int> ids;
  for (const auto& c : ds.categories) ids.push_back(c.id);
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssldet: self-supervised pretraining and label-efficiency experiments for object detection"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic benchmark (annotations.json + images/)");
  add_common(gen, common);

  std::string fuse_in, fuse_out;
  auto* fuse = app.add_subcommand("fuse", "Fuse multi-rater boxes into one box per object");
  add_common(fuse, common);
  fuse->add_option("-i,--input", fuse_in, "Annotation JSON")->required();
  fuse->add_option("--output", fuse_out, "Fused annotation JSON")->required();

  std::string split_in;
  auto* split = app.add_subcommand("split", "Split into train/val/test annotation files");
  add_common(split, common);
  split->add_option("-i,--input", split_in, "Annotation JSON")->required();

  std::string data_file, image_dir, val_file, encoder_ckpt, detector_ckpt, dets_file;
  auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining on the images of a dataset");
  add_common(pre, common);
  pre->add_option("-d,--data", data_file, "Annotation JSON (labels are ignored)")->required();
  pre->add_option("--image-dir", image_dir, "Directory holding the PGM images")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune the detector");
  add_common(ft, common);
  ft->add_option("-d,--data", data_file, "Labeled training annotations")->required();
  ft->add_option("--val", val_file, "Validation annotations")->required();
  ft->add_option("--image-dir", image_dir, "Directory holding the PGM images")->required();
  ft->add_option("--encoder", encoder_ckpt, "Pretrained encoder checkpoint (random init when omitted)");

  auto* ev = app.add_subcommand("evaluate", "COCO-style metrics on a labeled set");
  add_common(ev, common);
  ev->add_option("-d,--data", data_file, "Ground-truth annotations")->required();
  ev->add_option("--image-dir", image_dir, "Directory holding the PGM images");
  auto* ev_src = ev->add_option_group("source");
  ev_src->add_option("--checkpoint", detector_ckpt, "Detector checkpoint");
  ev_src->add_option("--detections", dets_file, "Detection JSON");
  ev_src->require_option(1);

  auto* ag = app.add_subcommand("agreement", "Inter-rater and model-vs-ground-truth IoU agreement");
  add_common(ag, common);
  ag->add_option("-d,--data", data_file, "Multi-rater annotations");
  ag->add_option("--test", val_file, "Fused test annotations for model rows");
  ag->add_option("--image-dir", image_dir, "Directory holding the PGM images");
  ag->add_option("--checkpoint", detector_ckpt, "Detector checkpoint for a model row");

  auto* sweep = app.add_subcommand("sweep", "Baseline + label-budget sweep, writes summary.csv");
  add_common(sweep, common);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const ExperimentConfig cfg = common.load();
    const fs::path out = cfg.output.dir;

    if (*gen) {
      const PreparedData data = prepare_data(cfg);
      save_dataset(data.raw, out / "annotations.json", out / "images");
      spdlog::info("wrote {} images, {} annotations to {}", data.raw.images.size(), data.raw.annotations.size(),
                   out.string());
    } else if (*fuse) {
      const Dataset ds = load_dataset(fuse_in);
      const Dataset fused = fuse_dataset(ds, cfg.data.fuse_iou);
      save_dataset(fused, fuse_out);
      spdlog::info("{} boxes fused into {}", ds.annotations.size(), fused.annotations.size());
    } else if (*split) {
      const Dataset ds = load_dataset(split_in);
      SplitSpec spec = cfg.split;
      spec.seed = run_seed(cfg, "split");
      const DatasetSplit s = split_dataset(ds, spec);
      save_dataset(s.train, out / "train.json");
      save_dataset(s.val, out / "val.json");
      save_dataset(s.test, out / "test.json");
      std::printf("train,%zu\nval,%zu\ntest,%zu\n", s.train.images.size(), s.val.images.size(), s.test.images.size());
    } else if (*pre) {
      const Dataset ds = load_dataset(data_file, fs::path(image_dir));
      ParamStore params;
      Encoder(cfg.encoder).init(params, derive_seed(run_seed(cfg, "pretrain"), {0xe4cULL}), true);
      SSLConfig ssl = cfg.ssl;
      ssl.seed = derive_seed(run_seed(cfg, "pretrain"), {0x551ULL});
      const PretrainResult r = pretrain(std::move(params), cfg.encoder, ds, ssl);
      save_checkpoint(r.params, out / "encoder.ckpt");
      std::string csv = "epoch,loss\n";
      for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) {
        csv += std::to_string(i + 1) + "," + std::to_string(r.epoch_loss[i]) + "\n";
      }
      write_text(out / "pretrain_loss.csv", csv);
    } else if (*ft) {
      const Dataset train = load_dataset(data_file, fs::path(image_dir));
      const Dataset val = load_dataset(val_file, fs::path(image_dir));
      DetConfig det = cfg.det;
      det.seed = derive_seed(run_seed(cfg, "finetune"), {0xde7ULL});
      const Detector detector(cfg.encoder, det, category_ids(train));
      ParamStore encoder;
      if (encoder_ckpt.empty()) {
        Encoder(cfg.encoder).init(encoder, derive_seed(run_seed(cfg, "finetune"), {0xe4cULL}), false);
      } else {
        encoder = load_checkpoint(encoder_ckpt);
      }
      const FinetuneResult r = finetune(detector, encoder, train, val, cfg.eval);
      save_checkpoint(r.params, out / "detector.ckpt");
      std::string csv = "epoch,train_loss,val_mAP\n";
      for (std::size_t i = 0; i < r.log.train_loss.size(); ++i) {
        csv += std::to_string(i + 1) + "," + std::to_string(r.log.train_loss[i]) + "," +
               std::to_string(r.log.val_map[i]) + "\n";
      }
      write_text(out / "finetune_log.csv", csv);
      spdlog::info("best epoch {} of {}", r.log.best_epoch, r.log.epochs_run);
    } else if (*ev) {
      const Dataset ds = load_dataset(data_file, opt_dir(image_dir));
      DetectionsByImage dets;
      if (!detector_ckpt.empty()) {
        if (image_dir.empty()) throw ConfigError("--image-dir is required with --checkpoint");
        const Detector detector(cfg.encoder, cfg.det, category_ids(ds));
        dets = predict_dataset(detector, load_checkpoint(detector_ckpt), ds);
        save_detections(dets, out / "detections.json");
      } else {
        dets = load_detections(dets_file);
      }
      const MetricsReport m = evaluate(dets, ground_truth_by_image(ds), cfg.eval);
      write_text(out / "metrics.json", metrics_to_json(m));
      std::printf("%s\n%s\n", metrics_csv_header().c_str(),
                  metrics_csv_row(fs::path(data_file).stem().string(), m, 0).c_str());
    } else if (*ag) {
      std::vector<AgreementRow> rows;
      if (!data_file.empty()) rows = rater_agreement(load_dataset(data_file), cfg.eval);
      if (!detector_ckpt.empty()) {
        if (val_file.empty() || image_dir.empty()) throw ConfigError("--test and --image-dir are required with --checkpoint");
        const Dataset test = load_dataset(val_file, fs::path(image_dir));
        const Detector detector(cfg.encoder, cfg.det, category_ids(test));
        rows.push_back({"model:" + fs::path(detector_ckpt).stem().string(),
                        model_gt_iou(ground_truth_by_image(test),
                                     predict_dataset(detector, load_checkpoint(detector_ckpt), test), cfg.eval)});
      }
      if (rows.empty()) throw ConfigError("agreement needs --data and/or --checkpoint");
      const std::string csv = agreement_csv(rows);
      write_text(out / "agreement.csv", csv);
      std::fputs(csv.c_str(), stdout);
    } else if (*sweep) {
      const SweepResult r = run_sweep(cfg);
      std::fputs(summary_csv(r.runs, cfg.output.record_wall_clock).c_str(), stdout);
      if (!r.all_ok()) {
        for (const auto& run : r.runs) {
          if (!run.ok()) spdlog::error("run {} failed: {}", run.run_id, run.error);
        }
        return kPartial;
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfig;
  } catch (const DivergenceError& e) {
    spdlog::error("training diverged: {}", e.what());
    return kDivergence;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kData;
  }
  return kOk;
}
