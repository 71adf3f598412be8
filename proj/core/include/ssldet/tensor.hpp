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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssldet/rng.hpp"

namespace ssldet {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& s);
std::size_t shape_size(const Shape& s);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// 3-D (C,H,W) element access.
  double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  void fill(double v);
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws DivergenceError naming `op` when `t` holds NaN or Inf.
void require_finite(const Tensor& t, std::string_view op);

/// Throws ShapeError naming `op` unless `t` has shape `expected`.
void require_shape(const Tensor& t, const Shape& expected, std::string_view op);

struct Parameter {
  Tensor value;
  Tensor grad;
};

/// Named trainable tensors in insertion order, each paired with its gradient.
class ParamStore {
 public:
  /// Adds a parameter with a zero gradient. Names must be unique.
  Parameter& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return get(name).value; }
  Tensor& grad(const std::string& name) { return get(name).grad; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  /// Adds `other`'s gradients into this store; both must hold the same names.
  void accumulate_grad(const ParamStore& other, double scale = 1.0);

  /// Copy of the values with fresh zero gradients.
  ParamStore clone_values() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<std::pair<std::string, Parameter>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// He (fan-in) normal initialization.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace ssldet
