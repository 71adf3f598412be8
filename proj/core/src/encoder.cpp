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

#include "ssldet/encoder.hpp"

#include <algorithm>
#include <string>

#include "ssldet/error.hpp"
#include "ssldet/layers.hpp"

namespace ssldet {

namespace {

std::string conv_name(std::size_t i, const char* what) {
  return "encoder.conv" + std::to_string(i + 1) + "." + what;
}
std::string fc_name(std::size_t j, const char* what) {
  return "projection.fc" + std::to_string(j + 1) + "." + what;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_size <= 0 || input_channels <= 0 || kernel <= 0 || kernel % 2 == 0) {
    throw ConfigError("encoder: sizes must be positive and the kernel odd");
  }
  if (stage_channels.empty()) throw ConfigError("encoder: at least one conv stage is required");
  if (std::any_of(stage_channels.begin(), stage_channels.end(), [](int c) { return c <= 0; })) {
    throw ConfigError("encoder: channel counts must be positive");
  }
  if (input_size % feature_stride() != 0) {
    throw ConfigError("encoder: downsampling by " + std::to_string(feature_stride()) + " does not divide input size " +
                      std::to_string(input_size));
  }
  if (embedding_dim != stage_channels.back()) {
    throw ConfigError("encoder: embedding_dim must equal the last stage's channel count");
  }
  if (projection_dims.size() < 2 || projection_dims.front() != embedding_dim) {
    throw ConfigError("encoder: projection dims must start at embedding_dim and have at least one layer");
  }
  if (std::any_of(projection_dims.begin(), projection_dims.end(), [](int d) { return d <= 0; })) {
    throw ConfigError("encoder: projection dims must be positive");
  }
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Encoder::init(ParamStore& params, std::uint64_t seed, bool with_projection) const {
  Rng rng(seed);
  auto in_ch = static_cast<std::size_t>(cfg_.input_channels);
  const auto k = static_cast<std::size_t>(cfg_.kernel);
  for (std::size_t i = 0; i < cfg_.stage_channels.size(); ++i) {
    const auto out_ch = static_cast<std::size_t>(cfg_.stage_channels[i]);
    params.add(conv_name(i, "weight"), he_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng));
    params.add(conv_name(i, "bias"), Tensor({out_ch}));
    in_ch = out_ch;
  }
  if (!with_projection) return;
  for (std::size_t j = 0; j + 1 < cfg_.projection_dims.size(); ++j) {
    const auto in = static_cast<std::size_t>(cfg_.projection_dims[j]);
    const auto out = static_cast<std::size_t>(cfg_.projection_dims[j + 1]);
    params.add(fc_name(j, "weight"), he_normal({out, in}, in, rng));
    params.add(fc_name(j, "bias"), Tensor({out}));
  }
}

Tensor Encoder::to_input(const ImageGrid& img) const {
  if (img.width != cfg_.input_size || img.height != cfg_.input_size || cfg_.input_channels != 1) {
    throw ShapeError("encoder: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                     " does not match input size " + std::to_string(cfg_.input_size));
  }
  const auto s = static_cast<std::size_t>(cfg_.input_size);
  return Tensor({1, s, s}, img.pixels);
}

Encoder::Trace Encoder::forward(const ParamStore& params, const ImageGrid& img, bool with_projection) const {
  return forward(params, to_input(img), with_projection);
}

Encoder::Trace Encoder::forward(const ParamStore& params, const Tensor& input, bool with_projection) const {
  const auto s = static_cast<std::size_t>(cfg_.input_size);
  require_shape(input, {static_cast<std::size_t>(cfg_.input_channels), s, s}, "encoder_forward");
  Trace t;
  t.stages.reserve(cfg_.stage_channels.size());
  Tensor x = input;
  for (std::size_t i = 0; i < cfg_.stage_channels.size(); ++i) {
    StageTrace st;
    st.input = std::move(x);
    st.activation = nn::relu_forward(
        nn::conv2d_forward(st.input, params.value(conv_name(i, "weight")), params.value(conv_name(i, "bias"))));
    auto pooled = nn::maxpool2_forward(st.activation);
    st.pool_argmax = std::move(pooled.argmax);
    x = std::move(pooled.output);
    t.stages.push_back(std::move(st));
  }
  t.features = std::move(x);
  if (!with_projection) return t;

  t.pooled = nn::global_avg_pool_forward(t.features);
  Tensor h = t.pooled;
  const std::size_t layers = cfg_.projection_dims.size() - 1;
  for (std::size_t j = 0; j < layers; ++j) {
    t.mlp_inputs.push_back(h);
    Tensor pre = nn::dense_forward(h, params.value(fc_name(j, "weight")), params.value(fc_name(j, "bias")));
    h = j + 1 < layers ? nn::relu_forward(pre) : pre;
    t.mlp_pre.push_back(std::move(pre));
  }
  t.embedding = nn::l2_normalize_forward(h);
  return t;
}

void Encoder::backward(ParamStore& params, const Trace& t, const Tensor* grad_features,
                       const Tensor* grad_embedding) const {
  Tensor g_feat = grad_features ? *grad_features : Tensor(t.features.shape());
  if (grad_features) require_shape(*grad_features, t.features.shape(), "encoder_backward(features)");

  if (grad_embedding) {
    if (t.mlp_pre.empty()) throw Error("encoder_backward: trace was recorded without the projection head");
    const std::size_t layers = t.mlp_pre.size();
    Tensor g = nn::l2_normalize_backward(t.mlp_pre.back(), *grad_embedding);
    for (std::size_t j = layers; j-- > 0;) {
      if (j + 1 < layers) g = nn::relu_backward(t.mlp_pre[j], g);
      auto dg = nn::dense_backward(t.mlp_inputs[j], params.value(fc_name(j, "weight")), g);
      auto& pw = params.grad(fc_name(j, "weight"));
      auto& pb = params.grad(fc_name(j, "bias"));
      for (std::size_t i = 0; i < pw.size(); ++i) pw[i] += dg.weight[i];
      for (std::size_t i = 0; i < pb.size(); ++i) pb[i] += dg.bias[i];
      g = std::move(dg.input);
    }
    const Tensor gf = nn::global_avg_pool_backward(t.features.shape(), g);
    for (std::size_t i = 0; i < g_feat.size(); ++i) g_feat[i] += gf[i];
  }

  Tensor g = std::move(g_feat);
  for (std::size_t i = t.stages.size(); i-- > 0;) {
    const StageTrace& st = t.stages[i];
    g = nn::maxpool2_backward(st.activation.shape(), st.pool_argmax, g);
    g = nn::relu_backward(st.activation, g);
    auto dg = nn::conv2d_backward(st.input, params.value(conv_name(i, "weight")), g, /*need_input_grad=*/i > 0);
    auto& pw = params.grad(conv_name(i, "weight"));
    auto& pb = params.grad(conv_name(i, "bias"));
    for (std::size_t k = 0; k < pw.size(); ++k) pw[k] += dg.weight[k];
    for (std::size_t k = 0; k < pb.size(); ++k) pb[k] += dg.bias[k];
    g = std::move(dg.input);
  }
}

EncoderOutput encoder_forward(const ParamStore& params, const EncoderConfig& cfg, std::span<const ImageGrid> batch) {
  if (batch.empty()) throw ShapeError("encoder_forward: empty batch");
  const Encoder enc(cfg);
  const auto n = batch.size();
  const auto c = static_cast<std::size_t>(cfg.stage_channels.back());
  const auto f = static_cast<std::size_t>(cfg.feature_size());
  const auto d = static_cast<std::size_t>(cfg.projection_dims.back());
  EncoderOutput out{Tensor({n, c, f, f}), Tensor({n, d})};
  for (std::size_t b = 0; b < n; ++b) {
    const auto t = enc.forward(params, batch[b]);
    std::copy(t.features.values().begin(), t.features.values().end(), out.features.data() + b * c * f * f);
    std::copy(t.embedding.values().begin(), t.embedding.values().end(), out.embeddings.data() + b * d);
  }
  return out;
}

}  // namespace ssldet
