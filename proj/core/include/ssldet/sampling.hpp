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
#include <map>
#include <span>
#include <vector>

#include "ssldet/data.hpp"

namespace ssldet {

/// Repeat-factor sampling settings. Images holding classes rarer than
/// `threshold` are repeated within an epoch.
struct SamplerConfig {
  double threshold = 0.4;
  std::uint64_t seed = 0;
};

/// class_id -> fraction of images containing at least one instance.
using ClassFrequencies = std::map<int, double>;

ClassFrequencies class_frequencies(const Dataset& ds);

/// max(1, sqrt(t / f_c)).
double repeat_factor(double class_frequency, double threshold);

/// Largest class repeat factor among the classes present in one image.
double image_repeat_factor(std::span<const Annotation> image_annotations, const ClassFrequencies& freqs,
                           double threshold);

/// One epoch of image ids. Each image appears floor(r) times plus once more with
/// probability frac(r); the result is shuffled. Images without annotations get r = 1.
std::vector<std::int64_t> build_epoch_indices(const Dataset& ds, const SamplerConfig& cfg);

}  // namespace ssldet
