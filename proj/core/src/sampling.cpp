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

#include "ssldet/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ssldet/error.hpp"
#include "ssldet/rng.hpp"

namespace ssldet {

ClassFrequencies class_frequencies(const Dataset& ds) {
  if (ds.images.empty()) throw DataError("class_frequencies: empty dataset");
  std::map<int, std::size_t> counts;
  for (const auto& [image_id, anns] : ds.annotations_by_image()) {
    std::set<int> present;
    for (const auto& a : anns) present.insert(a.class_id);
    for (int c : present) ++counts[c];
  }
  ClassFrequencies f;
  const double n = static_cast<double>(ds.images.size());
  for (const auto& [c, k] : counts) f[c] = static_cast<double>(k) / n;
  return f;
}

double repeat_factor(double class_frequency, double threshold) {
  if (!(class_frequency > 0)) throw DataError("repeat_factor: class frequency must be positive");
  if (!(threshold > 0 && threshold <= 1)) throw ConfigError("repeat_factor: threshold must lie in (0,1]");
  return std::max(1.0, std::sqrt(threshold / class_frequency));
}

double image_repeat_factor(std::span<const Annotation> image_annotations, const ClassFrequencies& freqs,
                           double threshold) {
  if (image_annotations.empty()) throw DataError("image_repeat_factor: image has no annotations");
  double r = 1.0;
  for (const auto& a : image_annotations) {
    const auto it = freqs.find(a.class_id);
    if (it == freqs.end()) throw DataError("image_repeat_factor: class missing from frequency table");
    r = std::max(r, repeat_factor(it->second, threshold));
  }
  return r;
}

std::vector<std::int64_t> build_epoch_indices(const Dataset& ds, const SamplerConfig& cfg) {
  if (!(cfg.threshold > 0 && cfg.threshold <= 1)) throw ConfigError("sampler threshold must lie in (0,1]");
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto freqs = ds.images.empty() ? ClassFrequencies{} : class_frequencies(ds);
  const auto by_image = ds.annotations_by_image();

  std::vector<std::int64_t> out;
  out.reserve(ds.images.size() * 2);
  for (const auto& im : ds.images) {
    const auto& anns = by_image.at(im.id);
    const double r = anns.empty() ? 1.0 : image_repeat_factor(anns, freqs, cfg.threshold);
    const double whole = std::floor(r);
    auto copies = static_cast<std::size_t>(whole);
    // Always draw so the stream position does not depend on r.
    if (coin(rng) < r - whole) ++copies;
    out.insert(out.end(), copies, im.id);
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace ssldet
