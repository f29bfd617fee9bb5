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
// 2-pass inference: (1) diarize and count speakers, (2) select the matching
// mask head and separate; optionally fuse diarization posteriors into the
// separated signals after correlation-based speaker alignment.

#ifndef EENDSS_INFERENCE_HPP_
#define EENDSS_INFERENCE_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "eendss/losses.hpp"
#include "eendss/model.hpp"

namespace eendss {

struct InferenceOptions {
  bool fusion = false;
  float theta = 0.5f;
  float tau = 0.5f;
  int64_t median_frames = 11;
};

struct InferenceResult {
  int64_t estimated_count = 0;
  DiarOutput diar;
  std::vector<float> existence;        // all generated q values (C_max + 1)
  std::vector<Waveform> separated;     // estimated_count signals, input length
  std::vector<Waveform> fused;         // present only when fusion enabled
  std::vector<int> alignment;          // separated index -> diar speaker index
  std::string warning;                 // machine-readable, empty when clean
};

// Zero-order hold: repeat each posterior `hop` times, extend the tail with
// the last value, trim to num_samples.
inline std::vector<float> upsample_posteriors(const float* row, int64_t frames, int64_t hop,
                                              int64_t num_samples) {
  std::vector<float> out(static_cast<size_t>(num_samples));
  for (int64_t i = 0; i < num_samples; ++i) {
    const int64_t t = std::min(i / hop, frames - 1);
    out[static_cast<size_t>(i)] = row[t];
  }
  return out;
}

inline double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double num = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;  // zero-variance signal: defined as 0
  return num / std::sqrt(va * vb);
}

// Exhaustive search for the permutation maximizing the summed correlation
// between |s_c| and the upsampled posterior of speaker phi_c. Ties resolve
// to the lexicographically smallest permutation.
inline std::vector<int> align_speakers(const std::vector<Waveform>& separated,
                                       const std::vector<float>& posteriors, int64_t speakers,
                                       int64_t frames, int64_t hop) {
  if (separated.empty() || static_cast<int64_t>(separated.size()) != speakers)
    throw ShapeError("align_speakers: " + std::to_string(separated.size()) + " signals vs " +
                     std::to_string(speakers) + " posterior rows");
  const int64_t n = static_cast<int64_t>(separated[0].size());
  std::vector<std::vector<float>> up(static_cast<size_t>(speakers));
  for (int64_t c = 0; c < speakers; ++c)
    up[static_cast<size_t>(c)] =
        upsample_posteriors(&posteriors[static_cast<size_t>(c * frames)], frames, hop, n);
  std::vector<std::vector<double>> corr(static_cast<size_t>(speakers),
                                        std::vector<double>(static_cast<size_t>(speakers)));
  for (int64_t c = 0; c < speakers; ++c) {
    std::vector<float> amp(separated[static_cast<size_t>(c)].size());
    for (size_t i = 0; i < amp.size(); ++i)
      amp[i] = std::fabs(separated[static_cast<size_t>(c)][i]);
    for (int64_t j = 0; j < speakers; ++j)
      corr[static_cast<size_t>(c)][static_cast<size_t>(j)] =
          pearson(amp, up[static_cast<size_t>(j)]);
  }
  const auto perms = permutations(static_cast<int>(speakers));
  double best = -std::numeric_limits<double>::infinity();
  size_t best_i = 0;
  for (size_t pi = 0; pi < perms.size(); ++pi) {
    double v = 0.0;
    for (int64_t c = 0; c < speakers; ++c)
      v += corr[static_cast<size_t>(c)][static_cast<size_t>(perms[pi][static_cast<size_t>(c)])];
    if (v > best) {
      best = v;
      best_i = pi;
    }
  }
  return perms[best_i];
}

// s'_c = s_c (.) upsampled p_{phi(c)}; raw probabilities, not binarized.
inline std::vector<Waveform> fuse(const std::vector<Waveform>& separated,
                                  const std::vector<float>& posteriors, int64_t frames,
                                  int64_t hop, const std::vector<int>& alignment) {
  std::vector<Waveform> out;
  out.reserve(separated.size());
  for (size_t c = 0; c < separated.size(); ++c) {
    const auto up = upsample_posteriors(
        &posteriors[static_cast<size_t>(alignment[c]) * static_cast<size_t>(frames)], frames, hop,
        static_cast<int64_t>(separated[c].size()));
    Waveform w(separated[c].size());
    for (size_t i = 0; i < w.size(); ++i) w[i] = separated[c][i] * up[i];
    out.push_back(std::move(w));
  }
  return out;
}

inline InferenceResult infer(EendSS& model, const Waveform& x, const InferenceOptions& opts) {
  NoGrad guard;
  const auto n = static_cast<int64_t>(x.size());
  InferenceResult res;

  // Pass 1: shared bottleneck, diarization, counting.
  auto xt = EendSS::wave_tensor(x);
  auto h = model.sep.encode(xt);
  auto e_tcn = model.sep.separate_features(h);
  Tensor lmf;
  if (model.config().lmf_concat) lmf = model.lmf_tensor(x);
  auto emb = model.diar.embed(e_tcn, lmf);
  auto att = model.diar.generate_attractors(emb, model.config().c_max + 1);
  res.existence = att.existence.value();
  int64_t c_hat = count_speakers(res.existence, opts.tau);
  if (c_hat > model.config().c_max) {
    c_hat = model.config().c_max;
    res.warning = "count-capped-at-c-max";
  }
  res.estimated_count = c_hat;
  if (c_hat == 0) {
    res.warning = "no-speakers-detected";
    res.diar.num_frames = emb.dim(0);
    return res;
  }
  auto p = model.diar.posteriors(emb, slice(att.attractors, 0, 0, c_hat));  // (T_d, C_hat)
  const int64_t t_d = p.dim(0);
  res.diar.num_speakers = c_hat;
  res.diar.num_frames = t_d;
  res.diar.estimated_count = c_hat;
  res.diar.posteriors.resize(static_cast<size_t>(c_hat * t_d));
  for (int64_t c = 0; c < c_hat; ++c)
    for (int64_t t = 0; t < t_d; ++t)
      res.diar.posteriors[static_cast<size_t>(c * t_d + t)] = p.value()[t * c_hat + c];
  res.diar.labels =
      binarize(res.diar.posteriors, c_hat, t_d, opts.theta, opts.median_frames);

  // Pass 2: head C_hat, separation, optional fusion.
  auto masks = model.sep.masks(e_tcn, c_hat);
  auto waves = model.sep.apply_masks_and_decode(h, masks, n);
  for (auto& w : waves) res.separated.emplace_back(w.value().begin(), w.value().end());
  res.alignment =
      align_speakers(res.separated, res.diar.posteriors, c_hat, t_d, model.diar_hop());
  if (opts.fusion)
    res.fused = fuse(res.separated, res.diar.posteriors, t_d, model.diar_hop(), res.alignment);
  return res;
}

}  // namespace eendss

#endif  // EENDSS_INFERENCE_HPP_
