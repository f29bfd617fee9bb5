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
// Training objectives: permutation-invariant diarization BCE, attractor
// existence BCE, SI-SDR with utterance-level permutation search, and the
// weighted multitask combination. Templated on the scalar type so the
// finite-difference oracle can run the double instantiation.

#ifndef EENDSS_LOSSES_HPP_
#define EENDSS_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "eendss/ops.hpp"

namespace eendss {

inline constexpr double kSiSdrClampDb = 60.0;
inline constexpr double kSiSdrEps = 1e-8;
inline constexpr int64_t kMaxPitSpeakers = 8;  // factorial guard

// All permutations of 0..n-1 in lexicographic order (deterministic
// tie-breaking relies on this ordering).
inline std::vector<std::vector<int>> permutations(int n) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

// Minimum over all C! reference permutations of the summed frame-wise BCE.
// posteriors: (T, C); labels: C x T, speaker-major. Returns the loss and the
// minimizing permutation phi, where phi[c] is the reference speaker matched
// to posterior channel c.
template <class T>
std::pair<TensorT<T>, std::vector<int>> pit_diar_loss(const TensorT<T>& posteriors,
                                                      const std::vector<uint8_t>& labels,
                                                      int64_t speakers) {
  if (posteriors.rank() != 2 || posteriors.dim(1) != speakers)
    throw ShapeError("pit_diar_loss: posteriors " + shape_str(posteriors.shape()) + " for " +
                     std::to_string(speakers) + " speakers");
  const int64_t frames = posteriors.dim(0);
  if (static_cast<int64_t>(labels.size()) != speakers * frames)
    throw ShapeError("pit_diar_loss: labels size " + std::to_string(labels.size()) +
                     " != C*T = " + std::to_string(speakers * frames));
  if (speakers > kMaxPitSpeakers)
    throw ValueError("pit_diar_loss: C = " + std::to_string(speakers) +
                     " exceeds the factorial guard of " + std::to_string(kMaxPitSpeakers));

  // Pairwise losses: pair[c][j] = summed BCE of posterior channel c against
  // reference speaker j. Permutation sums are then cheap scalar adds.
  std::vector<std::vector<TensorT<T>>> pair(static_cast<size_t>(speakers));
  for (int64_t c = 0; c < speakers; ++c) {
    auto col = slice(posteriors, 1, c, 1);
    for (int64_t j = 0; j < speakers; ++j) {
      std::vector<T> y(static_cast<size_t>(frames));
      for (int64_t t = 0; t < frames; ++t)
        y[static_cast<size_t>(t)] = static_cast<T>(labels[static_cast<size_t>(j * frames + t)]);
      pair[static_cast<size_t>(c)].push_back(bce_loss(col, y, BceReduce::kSum));
    }
  }
  const auto perms = permutations(static_cast<int>(speakers));
  double best = 0.0;
  size_t best_i = 0;
  for (size_t pi = 0; pi < perms.size(); ++pi) {
    double v = 0.0;
    for (int64_t c = 0; c < speakers; ++c)
      v += pair[static_cast<size_t>(c)][static_cast<size_t>(perms[pi][static_cast<size_t>(c)])]
               .item();
    if (pi == 0 || v < best) {
      best = v;
      best_i = pi;
    }
  }
  TensorT<T> loss = pair[0][static_cast<size_t>(perms[best_i][0])];
  for (int64_t c = 1; c < speakers; ++c)
    loss = add(loss, pair[static_cast<size_t>(c)][static_cast<size_t>(
                         perms[best_i][static_cast<size_t>(c)])]);
  return {loss, perms[best_i]};
}

// Attractor existence labels l = [1,...,1,0] of length C+1.
template <class T = float>
std::vector<T> existence_labels(int64_t speakers) {
  std::vector<T> l(static_cast<size_t>(speakers + 1), T(1));
  l.back() = T(0);
  return l;
}

// (1/(C+1)) * BCE([1..1,0], q).
template <class T>
TensorT<T> existence_loss(const TensorT<T>& existence, int64_t speakers) {
  if (existence.numel() != speakers + 1)
    throw ShapeError("existence_loss: expected " + std::to_string(speakers + 1) +
                     " probabilities, got " + std::to_string(existence.numel()));
  return bce_loss(existence, existence_labels<T>(speakers), BceReduce::kMean);
}

// -10 log10(||a s||^2 / ||e - a s||^2), a = <e,s>/||s||^2, clamped to
// +-60 dB with 1e-8 added to both numerator and denominator.
template <class T>
TensorT<T> si_sdr_loss(const TensorT<T>& estimate, const std::vector<T>& reference) {
  if (estimate.numel() != static_cast<int64_t>(reference.size()))
    throw ShapeError("si_sdr_loss: estimate " + shape_str(estimate.shape()) +
                     " vs reference of " + std::to_string(reference.size()) + " samples");
  double ref_energy = 0.0;
  for (T s : reference) ref_energy += static_cast<double>(s) * s;
  if (ref_energy == 0.0) throw ValueError("si_sdr_loss: all-zero reference");
  auto est = estimate.rank() == 1 ? reshape(estimate, {1, estimate.numel()}) : estimate;
  auto ref = TensorT<T>::from_vec(est.shape(), std::vector<T>(reference.begin(), reference.end()));
  auto alpha = scale(sum_all(mul(est, ref)), static_cast<T>(1.0 / ref_energy));
  auto target = mul(reshape(alpha, {1, 1}), ref);
  auto resid = sub(est, target);
  auto num = add_scalar(sum_all(mul(target, target)), static_cast<T>(kSiSdrEps));
  auto den = add_scalar(sum_all(mul(resid, resid)), static_cast<T>(kSiSdrEps));
  const T c = static_cast<T>(10.0 / std::log(10.0));
  auto loss = scale(sub(log_op(den), log_op(num)), c);
  return clamp(loss, static_cast<T>(-kSiSdrClampDb), static_cast<T>(kSiSdrClampDb));
}

// Mean SI-SDR loss over sources under the best utterance-level permutation.
// perm[c] is the reference index assigned to estimate c.
template <class T>
std::pair<TensorT<T>, std::vector<int>> pit_separation_loss(
    const std::vector<TensorT<T>>& estimates, const std::vector<std::vector<T>>& references) {
  if (estimates.empty() || estimates.size() != references.size())
    throw ShapeError("pit_separation_loss: " + std::to_string(estimates.size()) +
                     " estimates vs " + std::to_string(references.size()) + " references");
  const int k = static_cast<int>(estimates.size());
  if (k > kMaxPitSpeakers) throw ValueError("pit_separation_loss: too many sources");
  std::vector<std::vector<TensorT<T>>> pair(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < k; ++j)
      pair[static_cast<size_t>(c)].push_back(
          si_sdr_loss(estimates[static_cast<size_t>(c)], references[static_cast<size_t>(j)]));
  const auto perms = permutations(k);
  double best = 0.0;
  size_t best_i = 0;
  for (size_t pi = 0; pi < perms.size(); ++pi) {
    double v = 0.0;
    for (int c = 0; c < k; ++c)
      v += pair[static_cast<size_t>(c)][static_cast<size_t>(perms[pi][static_cast<size_t>(c)])]
               .item();
    if (pi == 0 || v < best) {
      best = v;
      best_i = pi;
    }
  }
  TensorT<T> loss = pair[0][static_cast<size_t>(perms[best_i][0])];
  for (int c = 1; c < k; ++c)
    loss = add(loss, pair[static_cast<size_t>(c)][static_cast<size_t>(
                         perms[best_i][static_cast<size_t>(c)])]);
  return {scale(loss, T(1) / static_cast<T>(k)), perms[best_i]};
}

struct LossWeights {
  float lambda1 = 1.0f;  // SI-SDR
  float lambda2 = 0.2f;  // diarization
  float lambda3 = 0.2f;  // existence
};

template <class T>
struct LossBreakdownT {
  TensorT<T> total;  // graph-attached scalar
  T l_sisdr = T(0);
  T l_diar = T(0);
  T l_exist = T(0);
  T total_value = T(0);
  std::vector<int> diar_perm;
  std::vector<int> sep_perm;
};
using LossBreakdown = LossBreakdownT<float>;

// total = lambda1 * l_sisdr + lambda2 * l_diar + lambda3 * l_exist.
// An undefined l_sisdr tensor is treated as exactly zero (the lambda1 = 0
// ablation skips the separation forward entirely).
template <class T>
LossBreakdownT<T> multitask_loss(const TensorT<T>& l_sisdr, const TensorT<T>& l_diar,
                                 const TensorT<T>& l_exist, const LossWeights& w) {
  if (w.lambda1 < 0.0f || w.lambda2 < 0.0f || w.lambda3 < 0.0f)
    throw ValueError("multitask_loss: negative loss weights rejected");
  LossBreakdownT<T> out;
  TensorT<T> total;
  if (l_sisdr.defined() && w.lambda1 > 0.0f) total = scale(l_sisdr, static_cast<T>(w.lambda1));
  auto accumulate = [&total](TensorT<T> term) {
    total = total.defined() ? add(total, term) : std::move(term);
  };
  accumulate(scale(l_diar, static_cast<T>(w.lambda2)));
  accumulate(scale(l_exist, static_cast<T>(w.lambda3)));
  out.total = total;
  out.l_sisdr = l_sisdr.defined() ? l_sisdr.item() : T(0);
  out.l_diar = l_diar.item();
  out.l_exist = l_exist.item();
  out.total_value = total.item();
  return out;
}

}  // namespace eendss

#endif  // EENDSS_LOSSES_HPP_
