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
// EEND branch with encoder-decoder attractors: strided input convolution
// (1/8 temporal subsampling), transformer encoder without positional
// encodings, LSTM attractor generation, per-frame posteriors, counting and
// binarization.

#ifndef EENDSS_DIARIZATION_HPP_
#define EENDSS_DIARIZATION_HPP_

#include <string>
#include <vector>

#include "eendss/dsp.hpp"
#include "eendss/nn.hpp"

namespace eendss {

struct DiarizationConfig {
  int64_t in_dim = 128;        // bottleneck feature dimension
  int64_t dim = 256;           // D
  int64_t tf_layers = 4;
  int64_t tf_heads = 4;
  int64_t tf_ff = 1024;
  int64_t subsample_factor = 8;
  bool lmf_concat = false;
  int64_t n_mels = 80;
};

struct AttractorSet {
  Tensor attractors;  // (C_gen, D)
  Tensor existence;   // (C_gen) probabilities in (0,1)
};

// Per-frame per-speaker outputs after thresholding.
struct DiarOutput {
  int64_t num_speakers = 0;
  int64_t num_frames = 0;
  std::vector<float> posteriors;  // num_speakers x num_frames
  std::vector<uint8_t> labels;    // num_speakers x num_frames
  int64_t estimated_count = 0;
};

// Length of the maximal prefix of q with every element > tau.
inline int64_t count_speakers(const std::vector<float>& q, float tau) {
  if (q.empty()) throw ValueError("count_speakers: empty probability vector");
  if (!(tau > 0.0f && tau < 1.0f)) throw ValueError("count_speakers: tau outside (0,1)");
  int64_t c = 0;
  for (float p : q) {
    if (p > tau) ++c;
    else break;
  }
  return c;
}

// 1-D majority (median) filter for binary labels; edge positions use
// shrunken windows. Ties on even shrunken windows resolve to 0.
inline void median_filter_inplace(uint8_t* row, int64_t n, int64_t width) {
  if (width <= 1 || n == 0) return;
  if (width % 2 == 0) throw ValueError("median filter width must be odd");
  const int64_t r = width / 2;
  std::vector<uint8_t> src(row, row + n);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t lo = std::max<int64_t>(0, i - r);
    const int64_t hi = std::min<int64_t>(n - 1, i + r);
    int64_t ones = 0;
    for (int64_t j = lo; j <= hi; ++j) ones += src[static_cast<size_t>(j)];
    row[i] = (2 * ones > hi - lo + 1) ? 1 : 0;
  }
}

// Per-speaker thresholding then median filtering of posteriors (C x T).
inline std::vector<uint8_t> binarize(const std::vector<float>& posteriors, int64_t speakers,
                                     int64_t frames, float theta, int64_t median_frames) {
  if (!(theta > 0.0f && theta < 1.0f)) throw ValueError("binarize: theta outside (0,1)");
  std::vector<uint8_t> labels(static_cast<size_t>(speakers * frames));
  for (int64_t c = 0; c < speakers; ++c) {
    uint8_t* row = &labels[static_cast<size_t>(c * frames)];
    const float* p = &posteriors[static_cast<size_t>(c * frames)];
    for (int64_t t = 0; t < frames; ++t) row[t] = p[t] >= theta ? 1 : 0;
    median_filter_inplace(row, frames, median_frames);
  }
  return labels;
}

class DiarizationNet {
 public:
  DiarizationNet() = default;
  DiarizationNet(const DiarizationConfig& cfg, Rng& rng) : cfg_(cfg) {
    // The strided input layer is a 2-D convolution over a (factor x in_dim)
    // time-frequency patch, realized as a 1-D conv with in_dim channels.
    subsample = Conv1dLayer(cfg.in_dim, cfg.dim, cfg.subsample_factor, rng,
                            cfg.subsample_factor);
    const int64_t proj_in = cfg.dim + (cfg.lmf_concat ? cfg.n_mels : 0);
    in_proj = Linear(proj_in, cfg.dim, rng);
    for (int64_t i = 0; i < cfg.tf_layers; ++i)
      layers.emplace_back(cfg.dim, cfg.tf_heads, cfg.tf_ff, rng);
    final_ln = LayerNorm(cfg.dim, rng);
    eda_encoder = Lstm(cfg.dim, cfg.dim, rng);
    eda_decoder = Lstm(cfg.dim, cfg.dim, rng);
    exist = Linear(cfg.dim, 1, rng);
  }

  // e_tcn: (B, T_f); lmf (optional): (T_d, n_mels) aligned to the
  // subsampled grid. Returns diarization embeddings (T_d, D).
  Tensor embed(const Tensor& e_tcn, const Tensor& lmf = Tensor()) const {
    if (e_tcn.dim(1) < cfg_.subsample_factor)
      throw ShapeError("diar embed: " + std::to_string(e_tcn.dim(1)) +
                       " frames subsample to an empty sequence");
    auto sub = transpose(subsample.forward(e_tcn));  // (T_d, D)
    Tensor x = sub;
    if (cfg_.lmf_concat) {
      if (!lmf.defined())
        throw ValueError("diar embed: model expects concatenated LMF features");
      if (lmf.rank() != 2 || lmf.dim(0) != sub.dim(0) || lmf.dim(1) != cfg_.n_mels)
        throw ShapeError("diar embed: LMF " + shape_str(lmf.shape()) +
                         " misaligned with subsampled frames " + shape_str(sub.shape()));
      x = concat<float>({sub, lmf}, 1);
    }
    auto h = in_proj.forward(x);
    for (const auto& layer : layers) h = layer.forward(h);
    return final_ln.forward(h);
  }

  // LSTM encoder consumes the embedding sequence in time order; the decoder,
  // fed zero vectors, emits exactly c_stop attractors plus existence probs.
  AttractorSet generate_attractors(const Tensor& embeddings, int64_t c_stop) const {
    if (c_stop < 1) throw ValueError("generate_attractors: c_stop must be >= 1");
    if (embeddings.dim(0) < 1) throw ValueError("generate_attractors: empty embedding sequence");
    auto state = eda_encoder.run(embeddings);
    Lstm::State dec{state.h, state.c};
    const auto zero_in = Tensor::zeros({1, cfg_.dim});
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(c_stop));
    for (int64_t c = 0; c < c_stop; ++c) {
      dec = eda_decoder.step(zero_in, dec);
      rows.push_back(dec.h);
    }
    AttractorSet out;
    out.attractors = concat(rows, 0);                             // (c_stop, D)
    out.existence = reshape(sigmoid(exist.forward(out.attractors)), {c_stop});
    return out;
  }

  // p_t = sigmoid(A e_t) for the given attractors: (T_d, k).
  Tensor posteriors(const Tensor& embeddings, const Tensor& attractors) const {
    if (attractors.dim(0) < 1) throw ValueError("posteriors: need at least one attractor");
    return sigmoid(matmul(embeddings, transpose(attractors)));
  }

  void collect(const std::string& p, NamedParams* out) {
    subsample.collect(p + ".subsample", out);
    in_proj.collect(p + ".in_proj", out);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(p + ".tf" + std::to_string(i), out);
    final_ln.collect(p + ".final_ln", out);
    eda_encoder.collect(p + ".eda_enc", out);
    eda_decoder.collect(p + ".eda_dec", out);
    exist.collect(p + ".exist", out);
  }

  const DiarizationConfig& config() const { return cfg_; }

  Conv1dLayer subsample;
  Linear in_proj;
  std::vector<TransformerLayer> layers;
  LayerNorm final_ln;
  Lstm eda_encoder, eda_decoder;
  Linear exist;

 private:
  DiarizationConfig cfg_;
};

}  // namespace eendss

#endif  // EENDSS_DIARIZATION_HPP_
