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
#include <span>
#include <vector>

#include "ssldet/image.hpp"
#include "ssldet/tensor.hpp"

namespace ssldet {

struct EncoderConfig {
  int input_size = 64;
  int input_channels = 1;
  std::vector<int> stage_channels{8, 16, 32};
  int kernel = 3;
  /// Width of the pooled representation; equals the last stage's channel count.
  int embedding_dim = 32;
  /// Projection MLP widths, starting at embedding_dim.
  std::vector<int> projection_dims{32, 32, 16};

  void validate() const;
  int feature_stride() const { return 1 << stage_channels.size(); }
  int feature_size() const { return input_size / feature_stride(); }
};

/// Conv stages (conv -> ReLU -> 2x2 max pool) followed by global average
/// pooling and a projection MLP whose output is L2-normalized.
///
/// Parameters are named `encoder.conv<i>.{weight,bias}` and
/// `projection.fc<j>.{weight,bias}`, 1-based.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }

  /// He-normal weights and zero biases, a pure function of `seed`.
  void init(ParamStore& params, std::uint64_t seed, bool with_projection = true) const;

  struct StageTrace {
    Tensor input;
    Tensor activation;  ///< ReLU output; its sign pattern doubles as the ReLU mask
    std::vector<std::uint32_t> pool_argmax;
  };

  struct Trace {
    std::vector<StageTrace> stages;
    Tensor features;  ///< (C, H/stride, W/stride)
    // Projection path; empty when run without it.
    Tensor pooled;
    std::vector<Tensor> mlp_inputs;
    std::vector<Tensor> mlp_pre;
    Tensor embedding;  ///< unit norm
  };

  Tensor to_input(const ImageGrid& img) const;

  Trace forward(const ParamStore& params, const Tensor& input, bool with_projection = true) const;
  Trace forward(const ParamStore& params, const ImageGrid& img, bool with_projection = true) const;

  /// Accumulates parameter gradients into `params`. Either upstream gradient may be null.
  void backward(ParamStore& params, const Trace& trace, const Tensor* grad_features,
                const Tensor* grad_embedding) const;

 private:
  EncoderConfig cfg_;
};

struct EncoderOutput {
  Tensor features;    ///< (N, C, h, w)
  Tensor embeddings;  ///< (N, D), unit-norm rows
};

/// Batched forward pass through the encoder and projection head.
EncoderOutput encoder_forward(const ParamStore& params, const EncoderConfig& cfg, std::span<const ImageGrid> batch);

}  // namespace ssldet
