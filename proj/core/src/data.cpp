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

#include "ssldet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "ssldet/error.hpp"
#include "ssldet/rng.hpp"

namespace ssldet {

using nlohmann::json;

void Dataset::validate() const {
  std::unordered_set<std::int64_t> ids;
  for (const auto& im : images) {
    if (!ids.insert(im.id).second) throw DataError("duplicate image id " + std::to_string(im.id));
  }
  std::unordered_set<int> cats;
  for (const auto& c : categories) {
    if (!cats.insert(c.id).second) throw DataError("duplicate category id " + std::to_string(c.id));
  }
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if (!ids.count(a.image_id)) {
      throw DataError("annotation " + std::to_string(i) + " references unknown image " + std::to_string(a.image_id));
    }
    if (!cats.count(a.class_id)) {
      throw DataError("annotation " + std::to_string(i) + " references unknown category " +
                      std::to_string(a.class_id));
    }
    if (!a.box.valid()) throw DataError("annotation " + std::to_string(i) + " has a degenerate box");
  }
}

std::map<std::int64_t, std::vector<Annotation>> Dataset::annotations_by_image() const {
  std::map<std::int64_t, std::vector<Annotation>> out;
  for (const auto& im : images) out[im.id];
  for (const auto& a : annotations) out[a.image_id].push_back(a);
  return out;
}

int Dataset::class_index(int category_id) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id == category_id) return static_cast<int>(i);
  }
  throw DataError("unknown category id " + std::to_string(category_id));
}

Dataset Dataset::subset(std::span<const std::int64_t> image_ids, bool keep_annotations) const {
  const std::unordered_set<std::int64_t> keep(image_ids.begin(), image_ids.end());
  Dataset out;
  out.categories = categories;
  for (const auto& im : images) {
    if (keep.count(im.id)) out.images.push_back(im);
  }
  if (keep_annotations) {
    for (const auto& a : annotations) {
      if (keep.count(a.image_id)) out.annotations.push_back(a);
    }
  }
  return out;
}

std::vector<std::int64_t> Dataset::image_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(images.size());
  for (const auto& im : images) ids.push_back(im.id);
  return ids;
}

const ImageRecord& Dataset::image(std::int64_t id) const {
  for (const auto& im : images) {
    if (im.id == id) return im;
  }
  throw DataError("unknown image id " + std::to_string(id));
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.images.size() != b.images.size()) return false;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    const auto& x = a.images[i];
    const auto& y = b.images[i];
    if (x.id != y.id || x.file != y.file || x.width != y.width || x.height != y.height) return false;
    if (x.pixels && y.pixels && !(*x.pixels == *y.pixels)) return false;
  }
  return a.annotations == b.annotations && a.categories == b.categories;
}

void SplitSpec::validate() const {
  if (!(train_frac > 0 && val_frac > 0 && test_frac > 0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<Annotation> fuse_rater_boxes(std::span<const Annotation> annotations, double iou_thresh) {
  if (annotations.empty()) return {};
  for (const auto& a : annotations) {
    if (a.image_id != annotations.front().image_id) {
      throw DataError("fuse_rater_boxes: annotations span multiple images");
    }
  }
  if (!(iou_thresh > 0 && iou_thresh < 1)) throw ConfigError("fusion IoU threshold must lie in (0,1)");

  const std::size_t n = annotations.size();
  DisjointSet sets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (annotations[i].class_id == annotations[j].class_id &&
          iou(annotations[i].box, annotations[j].box) > iou_thresh) {
        sets.unite(i, j);
      }
    }
  }

  std::map<std::size_t, std::vector<const Annotation*>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[sets.find(i)].push_back(&annotations[i]);

  std::vector<Annotation> fused;
  fused.reserve(clusters.size());
  for (auto& [root, members] : clusters) {
    // Summation order must not depend on input order.
    std::sort(members.begin(), members.end(), [](const Annotation* a, const Annotation* b) {
      return std::tie(a->box.x1, a->box.y1, a->box.x2, a->box.y2, a->id) <
             std::tie(b->box.x1, b->box.y1, b->box.x2, b->box.y2, b->id);
    });
    Annotation out;
    out.image_id = members.front()->image_id;
    out.class_id = members.front()->class_id;
    out.id = members.front()->id;
    Box sum{0, 0, 0, 0};
    for (const Annotation* m : members) {
      sum.x1 += m->box.x1;
      sum.y1 += m->box.y1;
      sum.x2 += m->box.x2;
      sum.y2 += m->box.y2;
      out.id = std::min(out.id, m->id);
    }
    const double k = static_cast<double>(members.size());
    out.box = {sum.x1 / k, sum.y1 / k, sum.x2 / k, sum.y2 / k};
    fused.push_back(std::move(out));
  }
  std::sort(fused.begin(), fused.end(), [](const Annotation& a, const Annotation& b) {
    return std::tie(a.class_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.id) <
           std::tie(b.class_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.id);
  });
  return fused;
}

Dataset fuse_dataset(const Dataset& ds, double iou_thresh) {
  Dataset out;
  out.images = ds.images;
  out.categories = ds.categories;
  for (const auto& [image_id, anns] : ds.annotations_by_image()) {
    auto fused = fuse_rater_boxes(anns, iou_thresh);
    out.annotations.insert(out.annotations.end(), fused.begin(), fused.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

namespace {

// Guards against products such as 0.2*3075 landing one ulp above an integer.
std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - 1e-9)); }

std::vector<std::int64_t> shuffled_ids(const Dataset& ds, std::uint64_t seed) {
  auto ids = ds.image_ids();
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

}  // namespace

SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  SplitSizes s;
  s.test = ceil_count(spec.test_frac * static_cast<double>(n));
  const std::size_t rest = n - std::min(n, s.test);
  s.val = ceil_count(spec.val_frac / (spec.val_frac + spec.train_frac) * static_cast<double>(rest));
  s.train = rest - std::min(rest, s.val);
  return s;
}

DatasetSplit split_dataset(const Dataset& ds, const SplitSpec& spec) {
  const std::size_t n = ds.images.size();
  const SplitSizes sizes = split_sizes(n, spec);
  if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0 || sizes.train + sizes.val + sizes.test != n) {
    throw DataError("dataset of " + std::to_string(n) + " images is too small to split");
  }
  const auto ids = shuffled_ids(ds, spec.seed);
  const std::span<const std::int64_t> all(ids);
  DatasetSplit out;
  out.train = ds.subset(all.subspan(0, sizes.train));
  out.val = ds.subset(all.subspan(sizes.train, sizes.val));
  out.test = ds.subset(all.subspan(sizes.train + sizes.val));
  return out;
}

std::size_t pretrain_count(std::size_t n, double pretrain_frac) {
  return ceil_count(pretrain_frac * static_cast<double>(n));
}

BudgetPartition partition_label_budget(const Dataset& train, const LabelBudget& budget) {
  if (!(budget.pretrain_frac > 0 && budget.pretrain_frac < 1)) {
    throw ConfigError("pretrain fraction must lie in (0,1)");
  }
  const std::size_t n = train.images.size();
  const std::size_t k = pretrain_count(n, budget.pretrain_frac);
  if (k == 0 || k >= n) {
    throw DataError("label budget " + std::to_string(budget.pretrain_frac) + " on " + std::to_string(n) +
                    " images leaves an empty side");
  }
  const auto ids = shuffled_ids(train, budget.seed);
  const std::span<const std::int64_t> all(ids);
  BudgetPartition out;
  out.pretrain = train.subset(all.subspan(0, k), /*keep_annotations=*/false);
  out.finetune = train.subset(all.subspan(k));
  return out;
}

// ---------------------------------------------------------------------------
// IO

Dataset load_dataset(const std::filesystem::path& annotation_file,
                     const std::optional<std::filesystem::path>& image_dir) {
  std::ifstream in(annotation_file);
  if (!in) throw DataError("cannot open annotation file '" + annotation_file.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("malformed annotation file '" + annotation_file.string() + "': " + e.what());
  }

  Dataset ds;
  auto field = [](const json& rec, const char* key, const char* what, std::size_t idx) -> const json& {
    if (!rec.is_object() || !rec.contains(key)) {
      throw DataError(std::string(what) + " record " + std::to_string(idx) + ": missing '" + key + "'");
    }
    return rec.at(key);
  };

  try {
    std::size_t idx = 0;
    for (const auto& rec : doc.value("categories", json::array())) {
      ds.categories.push_back({field(rec, "id", "category", idx).get<int>(),
                               field(rec, "name", "category", idx).get<std::string>()});
      ++idx;
    }
    std::unordered_map<std::int64_t, std::size_t> image_pos;
    idx = 0;
    for (const auto& rec : doc.value("images", json::array())) {
      ImageRecord im;
      im.id = field(rec, "id", "image", idx).get<std::int64_t>();
      im.file = field(rec, "file", "image", idx).get<std::string>();
      im.width = field(rec, "width", "image", idx).get<int>();
      im.height = field(rec, "height", "image", idx).get<int>();
      if (im.width <= 0 || im.height <= 0) {
        throw DataError("image record " + std::to_string(idx) + ": non-positive dimensions");
      }
      if (image_dir) {
        const auto path = *image_dir / im.file;
        if (!std::filesystem::exists(path)) {
          throw DataError("image record " + std::to_string(idx) + ": missing image '" + path.string() + "'");
        }
        auto grid = std::make_shared<ImageGrid>(read_pgm(path));
        if (grid->width != im.width || grid->height != im.height) {
          throw DataError("image record " + std::to_string(idx) + ": dimensions disagree with '" +
                          path.string() + "'");
        }
        im.pixels = std::move(grid);
      }
      image_pos[im.id] = ds.images.size();
      ds.images.push_back(std::move(im));
      ++idx;
    }
    idx = 0;
    for (const auto& rec : doc.value("annotations", json::array())) {
      Annotation a;
      a.id = field(rec, "id", "annotation", idx).get<std::int64_t>();
      a.image_id = field(rec, "image_id", "annotation", idx).get<std::int64_t>();
      a.class_id = field(rec, "category_id", "annotation", idx).get<int>();
      const auto& bbox = field(rec, "bbox", "annotation", idx);
      if (!bbox.is_array() || bbox.size() != 4) {
        throw DataError("annotation record " + std::to_string(idx) + ": bbox must be [x,y,w,h]");
      }
      if (rec.contains("rater_id") && !rec.at("rater_id").is_null()) {
        a.rater_id = rec.at("rater_id").get<std::string>();
      }
      const auto it = image_pos.find(a.image_id);
      if (it == image_pos.end()) {
        throw DataError("annotation record " + std::to_string(idx) + ": unknown image " +
                        std::to_string(a.image_id));
      }
      const auto& im = ds.images[it->second];
      const Box raw = Box::from_xywh(bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
                                     bbox[3].get<double>());
      a.box = clip_box(raw, im.width, im.height);
      if (!a.box.valid()) {
        throw DataError("annotation record " + std::to_string(idx) + ": box lies outside image bounds");
      }
      ds.annotations.push_back(std::move(a));
      ++idx;
    }
  } catch (const json::exception& e) {
    throw DataError("malformed annotation file '" + annotation_file.string() + "': " + e.what());
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& annotation_file,
                  const std::optional<std::filesystem::path>& image_dir) {
  json doc;
  doc["images"] = json::array();
  for (const auto& im : ds.images) {
    doc["images"].push_back({{"id", im.id}, {"file", im.file}, {"width", im.width}, {"height", im.height}});
  }
  doc["annotations"] = json::array();
  for (const auto& a : ds.annotations) {
    const auto xywh = a.box.to_xywh();
    json rec = {{"id", a.id},
                {"image_id", a.image_id},
                {"category_id", a.class_id},
                {"bbox", {xywh[0], xywh[1], xywh[2], xywh[3]}}};
    if (a.rater_id) rec["rater_id"] = *a.rater_id;
    doc["annotations"].push_back(std::move(rec));
  }
  doc["categories"] = json::array();
  for (const auto& c : ds.categories) doc["categories"].push_back({{"id", c.id}, {"name", c.name}});

  if (annotation_file.has_parent_path()) std::filesystem::create_directories(annotation_file.parent_path());
  std::ofstream out(annotation_file);
  if (!out) throw DataError("cannot write annotation file '" + annotation_file.string() + "'");
  out << doc.dump(1) << '\n';

  if (image_dir) {
    std::filesystem::create_directories(*image_dir);
    for (const auto& im : ds.images) {
      if (im.pixels) write_pgm(*im.pixels, *image_dir / im.file);
    }
  }
}

}  // namespace ssldet
