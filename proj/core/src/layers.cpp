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

#include "ssldet/layers.hpp"

#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "ssldet/error.hpp"

namespace ssldet::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void check_conv_shapes(const Tensor& x, const Tensor& weight, const char* op) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3) ||
      weight.dim(2) % 2 == 0) {
    throw ShapeError(std::string(op) + ": incompatible input " + shape_string(x.shape()) + " and weight " +
                     shape_string(weight.shape()));
  }
}

// cols(c*k*k + ky*k + kx, y*W + x) = x(c, y+ky-r, x+kx-r), zero outside.
Tensor im2col(const Tensor& x, std::size_t k) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor cols({C * k * k, H * W});
  double* out = cols.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(out, out + W, 0.0);
            out += W;
            continue;
          }
          const double* row = x.data() + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) + dx;
            *out++ = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : row[sx];
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Tensor& cols, const Shape& shape, std::size_t k) {
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  Tensor x(shape);
  const double* in = cols.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - r;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - r;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            in += W;
            continue;
          }
          double* row = x.data() + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t xx = 0; xx < W; ++xx, ++in) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) + dx;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) row[sx] += *in;
          }
        }
      }
    }
  }
  return x;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_conv_shapes(x, weight, "conv2d_forward");
  const std::size_t O = weight.dim(0), k = weight.dim(2), H = x.dim(1), W = x.dim(2);
  require_shape(bias, {O}, "conv2d_forward(bias)");
  const std::size_t K = x.dim(0) * k * k;

  Tensor out({O, H, W});
  MatMap y(out.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(H * W));
  ConstMatMap w(weight.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(K));
  if (k == 1) {
    ConstMatMap cols(x.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(H * W));
    y.noalias() = w * cols;
  } else {
    const Tensor c = im2col(x, k);
    ConstMatMap cols(c.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(H * W));
    y.noalias() = w * cols;
  }
  for (std::size_t o = 0; o < O; ++o) y.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  require_finite(out, "conv2d_forward");
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out, bool need_input_grad) {
  check_conv_shapes(x, weight, "conv2d_backward");
  const std::size_t O = weight.dim(0), k = weight.dim(2), H = x.dim(1), W = x.dim(2);
  require_shape(grad_out, {O, H, W}, "conv2d_backward(grad_out)");
  const std::size_t K = x.dim(0) * k * k;
  const auto HW = static_cast<Eigen::Index>(H * W);

  ConstMatMap gy(grad_out.data(), static_cast<Eigen::Index>(O), HW);
  ConstMatMap w(weight.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(K));

  ConvGrads g;
  g.weight = Tensor(weight.shape());
  g.bias = Tensor({O});
  MatMap gw(g.weight.data(), static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(K));
  Tensor c = k == 1 ? x : im2col(x, k);
  ConstMatMap cols(c.data(), static_cast<Eigen::Index>(K), HW);
  gw.noalias() = gy * cols.transpose();
  for (std::size_t o = 0; o < O; ++o) {
    const double* row = grad_out.data() + o * H * W;
    g.bias[o] = std::accumulate(row, row + H * W, 0.0);
  }

  if (need_input_grad) {
    Tensor gcols({K, H * W});
    MatMap gc(gcols.data(), static_cast<Eigen::Index>(K), HW);
    gc.noalias() = w.transpose() * gy;
    g.input = k == 1 ? gcols.reshaped(x.shape()) : col2im(gcols, x.shape(), k);
  }
  return g;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_shape(grad_out, x.shape(), "relu_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0)) g[i] = 0.0;
  }
  return g;
}

PoolResult maxpool2_forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2) {
    throw ShapeError("maxpool2_forward: expected (C,H,W) with even H,W, got " + shape_string(x.shape()));
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), h = H / 2, w = W / 2;
  PoolResult r{Tensor({C, h, w}), std::vector<std::uint32_t>(C * h * w)};
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx, ++o) {
        std::size_t best = (c * H + 2 * y) * W + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * H + 2 * y + dy) * W + 2 * xx + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        r.output[o] = x[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax, const Tensor& grad_out) {
  if (grad_out.size() != argmax.size()) throw ShapeError("maxpool2_backward: gradient/argmax size mismatch");
  Tensor g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

Tensor global_avg_pool_forward(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool_forward: expected (C,H,W), got " + shape_string(x.shape()));
  const std::size_t C = x.dim(0), n = x.dim(1) * x.dim(2);
  Tensor y({C});
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += x[c * n + i];
    y[c] = s / static_cast<double>(n);
  }
  return y;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_out) {
  if (input_shape.size() != 3) throw ShapeError("global_avg_pool_backward: expected (C,H,W) input shape");
  require_shape(grad_out, {input_shape[0]}, "global_avg_pool_backward");
  const std::size_t C = input_shape[0], n = input_shape[1] * input_shape[2];
  Tensor g(input_shape);
  for (std::size_t c = 0; c < C; ++c) {
    const double v = grad_out[c] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) g[c * n + i] = v;
  }
  return g;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 1 || weight.rank() != 2 || weight.dim(1) != x.dim(0)) {
    throw ShapeError("dense_forward: incompatible input " + shape_string(x.shape()) + " and weight " +
                     shape_string(weight.shape()));
  }
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  require_shape(bias, {out}, "dense_forward(bias)");
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    double s = bias[o];
    for (std::size_t i = 0; i < in; ++i) s += weight[o * in + i] * x[i];
    y[o] = s;
  }
  require_finite(y, "dense_forward");
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out) {
  const std::size_t out = weight.dim(0), in = weight.dim(1);
  require_shape(x, {in}, "dense_backward(input)");
  require_shape(grad_out, {out}, "dense_backward(grad_out)");
  DenseGrads g{Tensor({in}), Tensor(weight.shape()), grad_out};
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) {
      g.weight[o * in + i] = grad_out[o] * x[i];
      g.input[i] += weight[o * in + i] * grad_out[o];
    }
  }
  return g;
}

Tensor l2_normalize_forward(const Tensor& x) {
  double n2 = 0;
  for (double v : x.values()) n2 += v * v;
  const double n = std::sqrt(n2);
  if (!(n > 0)) throw DivergenceError("l2_normalize_forward: zero-norm input");
  Tensor y = x;
  for (double& v : y.values()) v /= n;
  require_finite(y, "l2_normalize_forward");
  return y;
}

Tensor l2_normalize_backward(const Tensor& x, const Tensor& grad_out) {
  require_shape(grad_out, x.shape(), "l2_normalize_backward");
  double n2 = 0;
  for (double v : x.values()) n2 += v * v;
  const double n = std::sqrt(n2);
  double dot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * grad_out[i];
  // dx = (g - y (y.g)) / ||x||, with y = x / ||x||.
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = (grad_out[i] - x[i] * dot / n2) / n;
  return g;
}

}  // namespace ssldet::nn
