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
// Conv-TasNet style separation branch: waveform encoder, TCN separator
// producing the shared bottleneck features, one 1x1 mask head per speaker
// count (only the selected head runs), and a shared transposed-conv decoder.

#ifndef EENDSS_SEPARATION_HPP_
#define EENDSS_SEPARATION_HPP_

#include <string>
#include <vector>

#include "eendss/nn.hpp"

namespace eendss {

struct SeparationConfig {
  int64_t enc_dim = 512;        // N
  int64_t bottleneck_dim = 128; // B
  int64_t hidden_dim = 512;     // conv channels inside a TCN block
  int64_t kernel = 16;
  int64_t stride = 8;
  int64_t tcn_layers = 8;       // dilations 1,2,4,...,2^(layers-1)
  int64_t tcn_repeats = 3;
  int64_t tcn_kernel = 3;
  int64_t c_max = 4;
};

class SeparationNet {
 public:
  SeparationNet() = default;
  SeparationNet(const SeparationConfig& cfg, Rng& rng) : cfg_(cfg) {
    encoder = Conv1dLayer(1, cfg.enc_dim, cfg.kernel, rng, cfg.stride);
    ln_in = GlobalLayerNorm(cfg.enc_dim, rng);
    bottleneck = Conv1dLayer(cfg.enc_dim, cfg.bottleneck_dim, 1, rng);
    for (int64_t r = 0; r < cfg.tcn_repeats; ++r)
      for (int64_t l = 0; l < cfg.tcn_layers; ++l) blocks.emplace_back(cfg, int64_t(1) << l, rng);
    mask_prelu = PReLULayer(rng);
    for (int64_t k = 1; k <= cfg.c_max; ++k)
      mask_heads.emplace_back(cfg.bottleneck_dim, k * cfg.enc_dim, 1, rng);
    decoder = ConvTranspose1dLayer(cfg.enc_dim, 1, cfg.kernel, cfg.stride, rng);
  }

  int64_t num_frames(int64_t samples) const {
    return (samples - cfg_.kernel) / cfg_.stride + 1;
  }

  // x: (1, T_s) -> non-negative encoder features (N, T_f).
  Tensor encode(const Tensor& x) const {
    if (x.dim(1) < cfg_.kernel)
      throw ShapeError("encode: input of " + std::to_string(x.dim(1)) +
                       " samples is shorter than the encoder kernel");
    return relu(encoder.forward(x));
  }

  // h: (N, T_f) -> bottleneck features (B, T_f).
  Tensor separate_features(const Tensor& h) const {
    auto y = bottleneck.forward(ln_in.forward(h));
    for (const auto& blk : blocks) y = blk.forward(y);
    return y;
  }

  // Head k applied to the bottleneck: PReLU -> 1x1 conv -> sigmoid,
  // reshaped to (k, N, T_f). Heads for other counts are untouched.
  Tensor masks(const Tensor& e_tcn, int64_t k) const {
    if (k < 1 || k > cfg_.c_max)
      throw ValueError("mask head " + std::to_string(k) + " outside [1, " +
                       std::to_string(cfg_.c_max) + "]");
    auto m = sigmoid(mask_heads[static_cast<size_t>(k - 1)].forward(mask_prelu.forward(e_tcn)));
    return reshape(m, {k, cfg_.enc_dim, m.dim(1)});
  }

  // d = h (.) m_c per source; decoder reconstructs each waveform, trimmed or
  // zero-padded to num_samples. Returns k tensors of shape (1, num_samples).
  std::vector<Tensor> apply_masks_and_decode(const Tensor& h, const Tensor& masks,
                                             int64_t num_samples) const {
    if (masks.rank() != 3 || masks.dim(1) != h.dim(0) || masks.dim(2) != h.dim(1))
      throw ShapeError("apply_masks: masks " + shape_str(masks.shape()) + " vs features " +
                       shape_str(h.shape()));
    const int64_t k = masks.dim(0);
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(k));
    for (int64_t c = 0; c < k; ++c) {
      auto m = reshape(slice(masks, 0, c, 1), {h.dim(0), h.dim(1)});
      auto wave = decoder.forward(mul(h, m));
      if (wave.dim(1) > num_samples) {
        wave = slice(wave, 1, 0, num_samples);
      } else if (wave.dim(1) < num_samples) {
        wave = concat<float>({wave, Tensor::zeros({1, num_samples - wave.dim(1)})}, 1);
      }
      outs.push_back(wave);
    }
    return outs;
  }

  void collect(const std::string& p, NamedParams* out) {
    encoder.collect(p + ".encoder", out);
    ln_in.collect(p + ".ln_in", out);
    bottleneck.collect(p + ".bottleneck", out);
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(p + ".tcn" + std::to_string(i), out);
    mask_prelu.collect(p + ".mask_prelu", out);
    for (size_t i = 0; i < mask_heads.size(); ++i)
      mask_heads[i].collect(p + ".head" + std::to_string(i + 1), out);
    decoder.collect(p + ".decoder", out);
  }

  // Named parameters of a single mask head (isolation checks).
  NamedParams head_params(int64_t k) {
    NamedParams out;
    mask_heads[static_cast<size_t>(k - 1)].collect("head" + std::to_string(k), &out);
    return out;
  }

  const SeparationConfig& config() const { return cfg_; }

  struct Block {
    Block(const SeparationConfig& cfg, int64_t dilation, Rng& rng)
        : expand(cfg.bottleneck_dim, cfg.hidden_dim, 1, rng),
          pr1(rng),
          n1(cfg.hidden_dim, rng),
          dconv(cfg.hidden_dim, cfg.hidden_dim, cfg.tcn_kernel, rng, 1, dilation,
                dilation * (cfg.tcn_kernel - 1) / 2, cfg.hidden_dim),
          pr2(rng),
          n2(cfg.hidden_dim, rng),
          project(cfg.hidden_dim, cfg.bottleneck_dim, 1, rng),
          dilation_(dilation) {}

    Tensor forward(const Tensor& x) const {
      auto y = n1.forward(pr1.forward(expand.forward(x)));
      y = n2.forward(pr2.forward(dconv.forward(y)));
      return add(x, project.forward(y));
    }

    void collect(const std::string& p, NamedParams* out) {
      expand.collect(p + ".expand", out);
      pr1.collect(p + ".pr1", out);
      n1.collect(p + ".n1", out);
      dconv.collect(p + ".dconv", out);
      pr2.collect(p + ".pr2", out);
      n2.collect(p + ".n2", out);
      project.collect(p + ".project", out);
    }

    int64_t dilation() const { return dilation_; }

    Conv1dLayer expand;
    PReLULayer pr1;
    GlobalLayerNorm n1;
    Conv1dLayer dconv;
    PReLULayer pr2;
    GlobalLayerNorm n2;
    Conv1dLayer project;

   private:
    int64_t dilation_;
  };

  Conv1dLayer encoder;
  GlobalLayerNorm ln_in;
  Conv1dLayer bottleneck;
  std::vector<Block> blocks;
  PReLULayer mask_prelu;
  std::vector<Conv1dLayer> mask_heads;
  ConvTranspose1dLayer decoder;

 private:
  SeparationConfig cfg_;
};

}  // namespace eendss

#endif  // EENDSS_SEPARATION_HPP_
