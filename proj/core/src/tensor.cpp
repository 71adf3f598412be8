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

#include "ssldet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "ssldet/error.hpp"

namespace ssldet {

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values do not fit shape " +
                     shape_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Tensor& t, std::string_view op) {
  if (!t.all_finite()) throw DivergenceError(std::string(op) + ": non-finite output");
}

void require_shape(const Tensor& t, const Shape& expected, std::string_view op) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(op) + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(t.shape()));
  }
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw Error("ParamStore: duplicate parameter '" + name + "'");
  Tensor grad(value.shape());
  index_[name] = entries_.size();
  entries_.push_back({name, Parameter{std::move(value), std::move(grad)}});
  return entries_.back().second;
}

Parameter& ParamStore::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: no parameter '" + name + "'");
  return entries_[it->second].second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw Error("ParamStore: no parameter '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

void ParamStore::accumulate_grad(const ParamStore& other, double scale) {
  for (auto& [name, p] : entries_) {
    const Tensor& g = other.get(name).grad;
    require_shape(g, p.grad.shape(), "accumulate_grad(" + name + ")");
    for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += scale * g[i];
  }
}

ParamStore ParamStore::clone_values() const {
  ParamStore out;
  for (const auto& [name, p] : entries_) out.add(name, p.value);
  return out;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].first != b.entries_[i].first) return false;
    if (!(a.entries_[i].second.value == b.entries_[i].second.value)) return false;
  }
  return true;
}

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace ssldet
