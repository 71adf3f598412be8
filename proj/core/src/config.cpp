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

#include "ssldet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ssldet/error.hpp"

namespace ssldet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  const std::string t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const std::string t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_integer(key, v)); }

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const std::string t = trim(v);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v, ',')) out.push_back(to_double(key, s));
  return out;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v, ',')) out.push_back(to_int(key, s));
  return out;
}

Range to_range(const std::string& key, const std::string& v) {
  const auto d = to_doubles(key, v);
  if (d.size() != 2) throw ConfigError("config key '" + key + "': expected 'lo, hi'");
  return {d[0], d[1]};
}

NormalizeMode to_normalize(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "equalize") return NormalizeMode::Equalize;
  if (t == "minmax") return NormalizeMode::MinMax;
  throw ConfigError("config key '" + key + "': expected 'equalize' or 'minmax', got '" + v + "'");
}

LrSchedule to_schedule(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "constant") return LrSchedule::Constant;
  if (t == "cosine_step") return LrSchedule::CosinePerStep;
  if (t == "cosine_epoch") return LrSchedule::CosinePerEpoch;
  throw ConfigError("config key '" + key + "': expected constant, cosine_step or cosine_epoch");
}

// name:shape:weight:min:max
std::vector<ClassSpec> to_classes(const std::string& key, const std::string& v) {
  std::vector<ClassSpec> out;
  for (const auto& item : split_list(v, ',')) {
    const auto f = split_list(item, ':');
    if (f.size() != 5) throw ConfigError("config key '" + key + "': class entries are name:shape:weight:min:max");
    ClassSpec c;
    c.name = f[0];
    try {
      c.shape = shape_kind_from_string(f[1]);
    } catch (const Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
    c.weight = to_double(key, f[2]);
    c.min_size = to_int(key, f[3]);
    c.max_size = to_int(key, f[4]);
    out.push_back(c);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const Range& r) { return fmt(r.lo) + ", " + fmt(r.hi); }
std::string fmt(NormalizeMode m) { return m == NormalizeMode::Equalize ? "equalize" : "minmax"; }
std::string fmt(LrSchedule s) {
  switch (s) {
    case LrSchedule::Constant: return "constant";
    case LrSchedule::CosinePerStep: return "cosine_step";
    case LrSchedule::CosinePerEpoch: return "cosine_epoch";
  }
  return "constant";
}
template <class T>
std::string fmt(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}
std::string fmt(const std::vector<ClassSpec>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& c = v[i];
    out += (i ? ", " : "") + c.name + ":" + to_string(c.shape) + ":" + fmt(c.weight) + ":" + fmt(c.min_size) + ":" +
           fmt(c.max_size);
  }
  return out;
}

struct Binding {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SSLDET_BIND(KEY, FIELD, PARSE)                                                                     \
  Binding {                                                                                                \
    KEY, [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = PARSE(k, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.FIELD); }                                           \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      SSLDET_BIND("experiment.seed", seed, to_u64),
      SSLDET_BIND("experiment.run_baseline", run_baseline, to_bool),
      Binding{"experiment.output_dir",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output.dir = trim(v); },
              [](const ExperimentConfig& c) { return c.output.dir.string(); }},
      SSLDET_BIND("experiment.record_wall_clock", output.record_wall_clock, to_bool),
      SSLDET_BIND("experiment.save_detections", output.save_detections, to_bool),

      Binding{"data.source",
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                const std::string t = trim(v);
                if (t != "synthetic" && t != "files") throw ConfigError("config key '" + k + "': synthetic or files");
                c.data.synthetic = t == "synthetic";
              },
              [](const ExperimentConfig& c) { return std::string(c.data.synthetic ? "synthetic" : "files"); }},
      Binding{"data.annotations",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.annotations = trim(v); },
              [](const ExperimentConfig& c) { return c.data.annotations.string(); }},
      Binding{"data.image_dir",
              [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.image_dir = trim(v); },
              [](const ExperimentConfig& c) { return c.data.image_dir.string(); }},
      SSLDET_BIND("data.fuse_iou", data.fuse_iou, to_double),

      SSLDET_BIND("synthetic.images", data.synth.n_images, to_int),
      SSLDET_BIND("synthetic.image_size", data.synth.image_size, to_int),
      SSLDET_BIND("synthetic.classes", data.synth.classes, to_classes),
      SSLDET_BIND("synthetic.min_objects", data.synth.min_objects, to_int),
      SSLDET_BIND("synthetic.max_objects", data.synth.max_objects, to_int),
      SSLDET_BIND("synthetic.background_level", data.synth.background_level, to_double),
      SSLDET_BIND("synthetic.noise_level", data.synth.noise_level, to_double),
      SSLDET_BIND("synthetic.foreground_level", data.synth.foreground_level, to_double),
      SSLDET_BIND("synthetic.raters", data.synth.raters, to_int),
      SSLDET_BIND("synthetic.rater_jitter", data.synth.rater_jitter, to_double),

      SSLDET_BIND("split.train", split.train_frac, to_double),
      SSLDET_BIND("split.val", split.val_frac, to_double),
      SSLDET_BIND("split.test", split.test_frac, to_double),

      SSLDET_BIND("sweep.fractions", fractions, to_doubles),
      SSLDET_BIND("sweep.scratch", scratch, to_bool),
      SSLDET_BIND("sweep.scratch_fractions", scratch_fractions, to_doubles),

      SSLDET_BIND("encoder.stage_channels", encoder.stage_channels, to_ints),
      SSLDET_BIND("encoder.kernel", encoder.kernel, to_int),
      SSLDET_BIND("encoder.embedding_dim", encoder.embedding_dim, to_int),
      SSLDET_BIND("encoder.projection_dims", encoder.projection_dims, to_ints),

      SSLDET_BIND("ssl.temperature", ssl.temperature, to_double),
      SSLDET_BIND("ssl.batch_pairs", ssl.batch_pairs, to_int),
      SSLDET_BIND("ssl.epochs", ssl.epochs, to_int),
      SSLDET_BIND("ssl.lr", ssl.optim.lr, to_double),
      SSLDET_BIND("ssl.lr_min", ssl.optim.lr_min, to_double),
      SSLDET_BIND("ssl.momentum", ssl.optim.momentum, to_double),
      SSLDET_BIND("ssl.weight_decay", ssl.optim.weight_decay, to_double),
      SSLDET_BIND("ssl.decoupled_weight_decay", ssl.optim.decoupled_weight_decay, to_bool),
      SSLDET_BIND("ssl.schedule", ssl.schedule, to_schedule),
      SSLDET_BIND("ssl.crop_scale", ssl.augment.crop_scale, to_range),
      SSLDET_BIND("ssl.flip_prob", ssl.augment.flip_prob, to_double),
      SSLDET_BIND("ssl.blur_sigma", ssl.augment.blur_sigma, to_range),
      SSLDET_BIND("ssl.blur_kernel", ssl.augment.blur_kernel, to_int),
      SSLDET_BIND("ssl.noise_sigma_frac", ssl.augment.noise_sigma_frac, to_range),
      SSLDET_BIND("ssl.normalize", ssl.augment.normalize, to_normalize),

      SSLDET_BIND("detect.pos_iou", det.pos_iou, to_double),
      SSLDET_BIND("detect.neg_iou", det.neg_iou, to_double),
      SSLDET_BIND("detect.score_threshold", det.score_threshold, to_double),
      SSLDET_BIND("detect.nms_iou", det.nms_iou, to_double),
      SSLDET_BIND("detect.max_detections", det.max_detections, to_int),
      SSLDET_BIND("detect.anchor_sizes", det.anchor_sizes, to_doubles),
      SSLDET_BIND("detect.head_channels", det.head_channels, to_int),
      SSLDET_BIND("detect.box_loss_weight", det.box_loss_weight, to_double),
      SSLDET_BIND("detect.lr", det.optim.lr, to_double),
      SSLDET_BIND("detect.momentum", det.optim.momentum, to_double),
      SSLDET_BIND("detect.weight_decay", det.optim.weight_decay, to_double),
      SSLDET_BIND("detect.decoupled_weight_decay", det.optim.decoupled_weight_decay, to_bool),
      SSLDET_BIND("detect.batch_size", det.batch_size, to_int),
      SSLDET_BIND("detect.max_epochs", det.max_epochs, to_int),
      SSLDET_BIND("detect.patience", det.patience, to_int),
      SSLDET_BIND("detect.min_epochs", det.min_epochs, to_int),
      SSLDET_BIND("detect.flip_prob", det.flip_prob, to_double),
      SSLDET_BIND("detect.normalize", det.normalize, to_normalize),
      SSLDET_BIND("detect.oversample", det.oversample, to_bool),
      SSLDET_BIND("detect.oversample_threshold", det.oversample_threshold, to_double),

      SSLDET_BIND("eval.iou_thresholds", eval.iou_thresholds, to_doubles),
      SSLDET_BIND("eval.recall_points", eval.recall_points, to_int),
      SSLDET_BIND("eval.max_detections", eval.max_detections, to_int),
      SSLDET_BIND("eval.small_area", eval.small_area, to_double),
      SSLDET_BIND("eval.agreement_iou", eval.agreement_iou, to_double),
      SSLDET_BIND("eval.sample_sigma", eval.sample_sigma, to_bool),
  };
  return table;
}

#undef SSLDET_BIND

const Binding& find_binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.key == key) return b;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.synthetic) {
    data.synth.validate();
  } else if (data.annotations.empty()) {
    throw ConfigError("data.annotations is required when data.source = files");
  }
  if (!(data.fuse_iou >= 0 && data.fuse_iou < 1)) throw ConfigError("data.fuse_iou must lie in [0,1)");
  split.validate();
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0 && fractions[i] < 1)) throw ConfigError("sweep fractions must lie in (0,1)");
    if (i > 0 && fractions[i] <= fractions[i - 1]) throw ConfigError("sweep fractions must be strictly increasing");
  }
  for (double f : scratch_fractions) {
    if (!(f > 0 && f < 1)) throw ConfigError("scratch fractions must lie in (0,1)");
  }
  encoder.validate();
  ssl.validate();
  det.validate();
  eval.validate();
  if (output.dir.empty()) throw ConfigError("experiment.output_dir must not be empty");
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  const std::string key = trim(assignment.substr(0, eq));
  find_binding(key).set(cfg, key, assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(ini_text);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' appears outside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      find_binding(full).set(cfg, full, value.data());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config '" + file->string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& b : bindings()) {
    const auto dot = b.key.find('.');
    const std::string s = b.key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += b.key.substr(dot + 1) + " = " + b.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& b : bindings()) keys.push_back(b.key);
  return keys;
}

}  // namespace ssldet
