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

#include <algorithm>
#include <cmath>
#include <map>

#include "ssldet/data.hpp"
#include "ssldet/error.hpp"
#include "ssldet/sampling.hpp"

using namespace ssldet;

namespace {

// n images; image i carries the classes listed by has(i).
template <class F>
Dataset make_dataset(int n, F has) {
  Dataset ds;
  ds.categories = {{0, "a"}, {1, "b"}, {2, "c"}};
  std::int64_t ann_id = 1;
  for (int i = 0; i < n; ++i) {
    ds.images.push_back({i + 1, "x.pgm", 32, 32, nullptr});
    for (int c = 0; c < 3; ++c) {
      if (has(i, c)) ds.annotations.push_back({ann_id++, i + 1, c, {1, 1, 4, 4}, std::nullopt});
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("class frequencies count images, not boxes") {
  const Dataset ds = make_dataset(10, [](int i, int c) { return c == 0 || (c == 1 && i == 3); });
  // A second box of class 0 in one image must not change its frequency.
  Dataset dup = ds;
  dup.annotations.push_back({99, 1, 0, {5, 5, 9, 9}, std::nullopt});
  for (const Dataset* d : {&ds, static_cast<const Dataset*>(&dup)}) {
    const auto f = class_frequencies(*d);
    CHECK(f.at(0) == 1.0);
    CHECK(f.at(1) == doctest::Approx(0.1));
    CHECK(f.count(2) == 0);
  }
}

TEST_CASE("class frequencies match an independent count on synthetic data") {
  SynthConfig cfg = SynthConfig::long_tail_default();
  cfg.n_images = 300;
  const Dataset ds = generate_synthetic(cfg);
  std::map<int, int> count;
  for (const auto& im : ds.images) {
    bool seen[4] = {false, false, false, false};
    for (const auto& a : ds.annotations) {
      if (a.image_id == im.id) seen[a.class_id] = true;
    }
    for (int c = 0; c < 4; ++c) count[c] += seen[c];
  }
  const auto f = class_frequencies(ds);
  for (const auto& [c, k] : count) CHECK(f.at(c) == doctest::Approx(k / 300.0).epsilon(1e-15));
}

TEST_CASE("repeat factor examples") {
  CHECK(repeat_factor(0.4, 0.4) == 1.0);
  CHECK(repeat_factor(0.9, 0.4) == 1.0);
  CHECK(repeat_factor(0.1, 0.4) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(repeat_factor(0.0, 0.4), DataError);
  CHECK_THROWS_AS(repeat_factor(0.5, 0.0), ConfigError);
}

TEST_CASE("repeat factor is >= 1 and non-increasing in frequency") {
  for (double t : {0.05, 0.4, 1.0}) {
    double prev = INFINITY;
    for (int k = 1; k <= 100; ++k) {
      const double f = k / 100.0;
      const double r = repeat_factor(f, t);
      CHECK(r >= 1.0);
      CHECK(r <= prev);
      CHECK((r == 1.0) == (f >= t));
      prev = r;
    }
  }
}

TEST_CASE("image repeat factor takes the rarest class") {
  const ClassFrequencies f{{0, 0.4}, {1, 0.1}};
  const std::vector<Annotation> both{{1, 1, 0, {0, 0, 1, 1}, {}}, {2, 1, 1, {0, 0, 1, 1}, {}}};
  CHECK(image_repeat_factor(both, f, 0.4) == doctest::Approx(2.0));
  CHECK(image_repeat_factor(std::span(both).first(1), f, 0.4) == 1.0);
  CHECK(image_repeat_factor(both, {{0, 0.9}, {1, 0.5}}, 0.4) == 1.0);
}

TEST_CASE("epoch indices") {
  SUBCASE("uniform case is a permutation") {
    const Dataset ds = make_dataset(20, [](int, int c) { return c == 0; });
    auto idx = build_epoch_indices(ds, {0.4, 1});
    std::sort(idx.begin(), idx.end());
    CHECK(idx == ds.image_ids());
  }
  SUBCASE("integer factor repeats exactly") {
    // class 1 in 1 of 10 images at t=0.4: r = 2.
    const Dataset ds = make_dataset(10, [](int i, int c) { return c == 0 || (c == 1 && i == 4); });
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto idx = build_epoch_indices(ds, {0.4, seed});
      CHECK(idx.size() == 11);
      CHECK(std::count(idx.begin(), idx.end(), 5) == 2);
    }
  }
  SUBCASE("deterministic in the seed") {
    const Dataset ds = make_dataset(30, [](int i, int c) { return c == 0 || (c == 2 && i % 7 == 0); });
    CHECK(build_epoch_indices(ds, {0.4, 5}) == build_epoch_indices(ds, {0.4, 5}));
    CHECK(build_epoch_indices(ds, {0.4, 5}) != build_epoch_indices(ds, {0.4, 6}));
  }
}

TEST_CASE("fractional repeat factor has the right expected multiplicity") {
  // class 1 in 4 of 100 images at t=0.09: r = sqrt(0.09 / 0.04) = 1.5.
  const Dataset ds = make_dataset(100, [](int i, int c) { return c == 0 || (c == 1 && i < 4); });
  const double r = image_repeat_factor(ds.annotations_by_image().at(1), class_frequencies(ds), 0.09);
  REQUIRE(r == doctest::Approx(1.5));
  const int epochs = 1000;
  double sum = 0;
  for (int e = 0; e < epochs; ++e) {
    const auto idx = build_epoch_indices(ds, {0.09, static_cast<std::uint64_t>(e)});
    sum += static_cast<double>(std::count(idx.begin(), idx.end(), 1));
  }
  const double sigma = std::sqrt(0.25 / epochs);
  CHECK(std::abs(sum / epochs - 1.5) <= 3 * sigma);
}

TEST_CASE("epoch length >= dataset size, with equality iff no class is rare") {
  for (double t : {0.05, 0.2, 0.5, 0.9}) {
    const Dataset ds = make_dataset(40, [](int i, int c) { return c == 0 || (c == 1 && i % 4 == 0) || (c == 2 && i < 6); });
    const auto f = class_frequencies(ds);
    const bool any_rare = std::any_of(f.begin(), f.end(), [&](const auto& kv) { return kv.second < t; });
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto n = build_epoch_indices(ds, {t, seed}).size();
      CHECK(n >= 40);
      if (!any_rare) CHECK(n == 40);
    }
    if (any_rare) {
      std::size_t total = 0;
      for (std::uint64_t seed = 0; seed < 10; ++seed) total += build_epoch_indices(ds, {t, seed}).size();
      CHECK(total > 400);
    }
  }
}
