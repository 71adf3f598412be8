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
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssldet/geometry.hpp"
#include "ssldet/image.hpp"

namespace ssldet {

struct Annotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  int class_id = 0;
  Box box;
  std::optional<std::string> rater_id;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct ImageRecord {
  std::int64_t id = 0;
  std::string file;
  int width = 0;
  int height = 0;
  /// Decoded pixels; shared between datasets derived from the same source.
  std::shared_ptr<const ImageGrid> pixels;
};

struct Category {
  int id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

/// Images, annotations and the category table. Immutable once built.
struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  std::vector<Category> categories;

  /// Throws DataError on duplicate image ids, dangling image references or
  /// unknown categories.
  void validate() const;

  /// Annotations grouped by image id; every image has an entry.
  std::map<std::int64_t, std::vector<Annotation>> annotations_by_image() const;

  /// Position of a category id in the category table.
  int class_index(int category_id) const;

  /// Subset restricted to the given image ids, in this dataset's image order.
  Dataset subset(std::span<const std::int64_t> image_ids, bool keep_annotations = true) const;

  std::vector<std::int64_t> image_ids() const;
  const ImageRecord& image(std::int64_t id) const;
};

/// Metadata, annotation and category equality; pixels are compared when both sides hold them.
bool operator==(const Dataset& a, const Dataset& b);

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

struct DatasetSplit {
  Dataset train, val, test;
};

struct LabelBudget {
  double pretrain_frac = 0.5;
  std::uint64_t seed = 0;
};

struct BudgetPartition {
  Dataset pretrain;  ///< annotations removed
  Dataset finetune;
};

/// Single-linkage fusion of same-class boxes from several raters on one image.
///
/// Two boxes are linked when their IoU exceeds `iou_thresh`; connected
/// components are replaced by the corner-wise mean of their members. Output
/// order is ascending (class_id, x1, y1), each fused box takes the smallest
/// member id, and rater ids are cleared.
std::vector<Annotation> fuse_rater_boxes(std::span<const Annotation> annotations, double iou_thresh = 0.2);

/// Applies fuse_rater_boxes per image.
Dataset fuse_dataset(const Dataset& ds, double iou_thresh = 0.2);

/// Split sizes for n images. The test split takes ceil(test_frac*n); the
/// validation split takes ceil(val_frac/(val_frac+train_frac) * remaining);
/// the train split receives the rest.
SplitSizes split_sizes(std::size_t n, const SplitSpec& spec);

DatasetSplit split_dataset(const Dataset& ds, const SplitSpec& spec);

/// Number of images moved to the unlabeled side: ceil(pretrain_frac * n).
std::size_t pretrain_count(std::size_t n, double pretrain_frac);

BudgetPartition partition_label_budget(const Dataset& train, const LabelBudget& budget);

/// Loads the JSON annotation file; images are read from `image_dir` when given.
Dataset load_dataset(const std::filesystem::path& annotation_file,
                     const std::optional<std::filesystem::path>& image_dir = std::nullopt);

/// Writes the JSON annotation file and, when `image_dir` is given, one PGM per image holding pixels.
void save_dataset(const Dataset& ds, const std::filesystem::path& annotation_file,
                  const std::optional<std::filesystem::path>& image_dir = std::nullopt);

// ---------------------------------------------------------------------------
// Synthetic benchmark

enum class ShapeKind { Disc, Bar, Ring, Cross, Triangle, Square };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

struct ClassSpec {
  std::string name;
  ShapeKind shape = ShapeKind::Disc;
  double weight = 1.0;
  int min_size = 6;  ///< px, longest side
  int max_size = 24;
};

struct SynthConfig {
  int n_images = 2000;
  int image_size = 64;
  std::vector<ClassSpec> classes;
  int min_objects = 1;
  int max_objects = 3;
  double background_level = 0.2;
  double noise_level = 0.05;
  double foreground_level = 0.8;
  /// Number of simulated raters; 0 emits the true boxes without rater ids.
  int raters = 0;
  /// Std-dev (px) of zero-mean jitter applied to each rater's box corners.
  double rater_jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;

  /// 4 classes with long-tail weights (8,4,2,1).
  static SynthConfig long_tail_default();
};

/// Binary object footprint rendered for one shape; tight by construction.
struct ShapeMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> on;
  bool at(int x, int y) const { return on[static_cast<std::size_t>(y) * width + x] != 0; }
};

ShapeMask render_shape(ShapeKind kind, int width, int height);

Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace ssldet
