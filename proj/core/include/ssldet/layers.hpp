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
#include <vector>

#include "ssldet/tensor.hpp"

/// Single-sample layer kernels with exact analytic gradients.
///
/// Feature maps are (C,H,W) tensors, vectors are rank-1. Every forward checks
/// operand shapes (ShapeError) and output finiteness (DivergenceError).
namespace ssldet::nn {

struct ConvGrads {
  Tensor input;  ///< empty when not requested
  Tensor weight;
  Tensor bias;
};

/// Stride-1 "same" convolution; weight (O,C,k,k) with odd k, bias (O).
Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, bool need_input_grad = true);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct PoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  ///< flat input index per output element
};

/// 2x2 max pooling with stride 2; H and W must be even. Ties pick the first
/// element in row-major window order.
PoolResult maxpool2_forward(const Tensor& x);
Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax, const Tensor& grad_out);

Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out);

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

/// y = W x + b with W (out,in).
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out);

/// y = x / ||x||.
Tensor l2_normalize_forward(const Tensor& x);
Tensor l2_normalize_backward(const Tensor& x, const Tensor& grad_out);

}  // namespace ssldet::nn
