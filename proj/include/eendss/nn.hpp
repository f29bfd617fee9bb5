// Copyright (c) 2026 eendss contributors
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
//
// Layer modules: parameter containers plus forward passes built from the
// differentiable primitives. Weights initialize uniform in ±sqrt(1/fan_in)
// from the run's seeded RNG.

#ifndef EENDSS_NN_HPP_
#define EENDSS_NN_HPP_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "eendss/ops.hpp"

namespace eendss {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline Tensor uniform_param(Shape shape, float bound, Rng& rng) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(static_cast<size_t>(numel_of(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_vec(std::move(shape), std::move(v), /*requires_grad=*/true);
}

inline Tensor const_param(Shape shape, float value) {
  auto t = Tensor::filled(std::move(shape), value);
  t.set_requires_grad();
  return t;
}

class Linear {
 public:
  Linear() = default;
  Linear(int64_t in, int64_t out, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    w = uniform_param({in, out}, bound, rng);
    b = uniform_param({1, out}, bound, rng);
  }
  // x: (T, in) -> (T, out)
  Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }
  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".w", w);
    out->emplace_back(p + ".b", b);
  }
  Tensor w, b;
};

class Conv1dLayer {
 public:
  Conv1dLayer() = default;
  Conv1dLayer(int64_t cin, int64_t cout, int64_t kernel, Rng& rng, int64_t stride = 1,
              int64_t dilation = 1, int64_t pad = 0, int64_t groups = 1, bool bias = true)
      : stride_(stride), dilation_(dilation), pad_(pad), groups_(groups) {
    const float bound = 1.0f / std::sqrt(static_cast<float>((cin / groups) * kernel));
    w = uniform_param({cout, cin / groups, kernel}, bound, rng);
    if (bias) b = uniform_param({cout}, bound, rng);
  }
  // x: (C_in, L) -> (C_out, L_out)
  Tensor forward(const Tensor& x) const {
    return conv1d(x, w, b, stride_, dilation_, pad_, groups_);
  }
  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".w", w);
    if (b.defined()) out->emplace_back(p + ".b", b);
  }
  Tensor w, b;

 private:
  int64_t stride_ = 1, dilation_ = 1, pad_ = 0, groups_ = 1;
};

class ConvTranspose1dLayer {
 public:
  ConvTranspose1dLayer() = default;
  ConvTranspose1dLayer(int64_t cin, int64_t cout, int64_t kernel, int64_t stride, Rng& rng)
      : stride_(stride) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(cin * kernel));
    w = uniform_param({cin, cout, kernel}, bound, rng);
    b = uniform_param({cout}, bound, rng);
  }
  Tensor forward(const Tensor& x) const { return conv_transpose1d(x, w, b, stride_); }
  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".w", w);
    out->emplace_back(p + ".b", b);
  }
  Tensor w, b;

 private:
  int64_t stride_ = 1;
};

// Channel-shared PReLU (single learnable slope).
class PReLULayer {
 public:
  PReLULayer() = default;
  explicit PReLULayer(Rng&) { slope = const_param({1}, 0.25f); }
  Tensor forward(const Tensor& x) const { return prelu(x, slope); }
  void collect(const std::string& p, NamedParams* out) { out->emplace_back(p + ".slope", slope); }
  Tensor slope;
};

// Per-frame layer norm over the feature (last) axis of (T, D) input.
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int64_t dim, Rng&) {
    gamma = const_param({1, dim}, 1.0f);
    beta = const_param({1, dim}, 0.0f);
  }
  Tensor forward(const Tensor& x) const {
    return add(mul(layer_norm_rows(x), gamma), beta);
  }
  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".gamma", gamma);
    out->emplace_back(p + ".beta", beta);
  }
  Tensor gamma, beta;
};

// Global layer norm over all (C, T) positions with per-channel affine.
class GlobalLayerNorm {
 public:
  GlobalLayerNorm() = default;
  explicit GlobalLayerNorm(int64_t channels, Rng&) {
    gamma = const_param({channels, 1}, 1.0f);
    beta = const_param({channels, 1}, 0.0f);
  }
  Tensor forward(const Tensor& x) const { return global_layer_norm(x, gamma, beta); }
  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".gamma", gamma);
    out->emplace_back(p + ".beta", beta);
  }
  Tensor gamma, beta;
};

// Multi-head self-attention without positional encodings.
class MultiheadSelfAttention {
 public:
  MultiheadSelfAttention() = default;
  MultiheadSelfAttention(int64_t dim, int64_t heads, Rng& rng)
      : heads_(heads), dh_(dim / heads), wq(dim, dim, rng), wk(dim, dim, rng),
        wv(dim, dim, rng), wo(dim, dim, rng) {
    if (dim % heads != 0) throw ValueError("attention: dim must be divisible by heads");
  }
  // x: (T, D) -> (T, D)
  Tensor forward(const Tensor& x) const {
    auto q = wq.forward(x), k = wk.forward(x), v = wv.forward(x);
    const float inv_scale = 1.0f / std::sqrt(static_cast<float>(dh_));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads_));
    for (int64_t h = 0; h < heads_; ++h) {
      auto qh = slice(q, 1, h * dh_, dh_);
      auto kh = slice(k, 1, h * dh_, dh_);
      auto vh = slice(v, 1, h * dh_, dh_);
      auto attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
      outs.push_back(matmul(attn, vh));
    }
    return wo.forward(concat(outs, 1));
  }
  void collect(const std::string& p, NamedParams* out) {
    wq.collect(p + ".wq", out);
    wk.collect(p + ".wk", out);
    wv.collect(p + ".wv", out);
    wo.collect(p + ".wo", out);
  }

 private:
  int64_t heads_ = 0, dh_ = 0;

 public:
  Linear wq, wk, wv, wo;
};

// Pre-LN transformer encoder layer.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(int64_t dim, int64_t heads, int64_t ff_dim, Rng& rng)
      : ln1(dim, rng), ln2(dim, rng), attn(dim, heads, rng), ff1(dim, ff_dim, rng),
        ff2(ff_dim, dim, rng) {}
  Tensor forward(const Tensor& x) const {
    auto h = add(x, attn.forward(ln1.forward(x)));
    return add(h, ff2.forward(relu(ff1.forward(ln2.forward(h)))));
  }
  void collect(const std::string& p, NamedParams* out) {
    ln1.collect(p + ".ln1", out);
    ln2.collect(p + ".ln2", out);
    attn.collect(p + ".attn", out);
    ff1.collect(p + ".ff1", out);
    ff2.collect(p + ".ff2", out);
  }
  LayerNorm ln1, ln2;
  MultiheadSelfAttention attn;
  Linear ff1, ff2;
};

// Single-layer LSTM. Gate order i, f, g, o packed along the column axis.
class Lstm {
 public:
  Lstm() = default;
  Lstm(int64_t in, int64_t hidden, Rng& rng) : hidden_(hidden) {
    const float bi = 1.0f / std::sqrt(static_cast<float>(in));
    const float bh = 1.0f / std::sqrt(static_cast<float>(hidden));
    w_ih = uniform_param({in, 4 * hidden}, bi, rng);
    w_hh = uniform_param({hidden, 4 * hidden}, bh, rng);
    b = uniform_param({1, 4 * hidden}, bh, rng);
  }

  struct State {
    Tensor h, c;  // each (1, H)
  };

  State initial_state() const {
    return {Tensor::zeros({1, hidden_}), Tensor::zeros({1, hidden_})};
  }

  State step(const Tensor& x, const State& s) const {
    auto gates = add(add(matmul(x, w_ih), matmul(s.h, w_hh)), b);
    return apply_gates(gates, s);
  }

  // Consumes (T, in) row by row; the input-side gates are one batched
  // matmul, only the recurrent part runs per step.
  State run(const Tensor& x) const {
    auto gates_x = add(matmul(x, w_ih), b);  // (T, 4H)
    State s = initial_state();
    for (int64_t t = 0; t < x.dim(0); ++t) {
      auto gates = add(slice(gates_x, 0, t, 1), matmul(s.h, w_hh));
      s = apply_gates(gates, s);
    }
    return s;
  }

  void collect(const std::string& p, NamedParams* out) {
    out->emplace_back(p + ".w_ih", w_ih);
    out->emplace_back(p + ".w_hh", w_hh);
    out->emplace_back(p + ".b", b);
  }

  int64_t hidden() const { return hidden_; }
  Tensor w_ih, w_hh, b;

 private:
  State apply_gates(const Tensor& gates, const State& s) const {
    auto i = sigmoid(slice(gates, 1, 0, hidden_));
    auto f = sigmoid(slice(gates, 1, hidden_, hidden_));
    auto g = tanh_op(slice(gates, 1, 2 * hidden_, hidden_));
    auto o = sigmoid(slice(gates, 1, 3 * hidden_, hidden_));
    auto c = add(mul(f, s.c), mul(i, g));
    auto h = mul(o, tanh_op(c));
    return {h, c};
  }

  int64_t hidden_ = 0;
};

}  // namespace eendss

#endif  // EENDSS_NN_HPP_
