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
// Evaluation suite: frame-level DER with optimal speaker mapping, SI-SDR /
// SDR improvements, STOI, speaker counting accuracy, and the silent-padding
// protocol for count mismatches. Pure double-precision functions,
// independent of the autodiff loss path.

#ifndef EENDSS_METRICS_HPP_
#define EENDSS_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "eendss/diarization.hpp"
#include "eendss/dsp.hpp"
#include "eendss/losses.hpp"

namespace eendss {

inline constexpr double kMetricClampDb = 60.0;
inline constexpr double kMetricEps = 1e-8;
inline constexpr float kSilentPadAmplitude = 1e-6f;
inline constexpr int64_t kSdrFilterTaps = 512;

// ---------------------------------------------------------------------------
// Assignment.
// ---------------------------------------------------------------------------

// Hungarian algorithm (potentials formulation) on an n x m cost matrix with
// n <= m; returns the column assigned to each row, minimizing total cost.
inline std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  if (n > m) throw ValueError("hungarian: rows exceed columns");
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1)), v(static_cast<size_t>(m + 1));
  std::vector<int> p(static_cast<size_t>(m + 1), 0), way(static_cast<size_t>(m + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(m + 1), kInf);
    std::vector<char> used(static_cast<size_t>(m + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = p[static_cast<size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

// ---------------------------------------------------------------------------
// DER.
// ---------------------------------------------------------------------------

struct DerBreakdown {
  double der_pct = 0.0;
  double miss_pct = 0.0;
  double fa_pct = 0.0;
  double conf_pct = 0.0;
  int64_t ref_speech_frames = 0;
  bool defined = true;  // false when the reference contains no speech
};

// Frame-level DER at 8 ms resolution. The hypothesis is median-filtered,
// the speaker mapping maximizes matched speech (equivalently minimizes
// confusion), and frames within `collar_s` of a reference boundary are
// excluded. Extra hypothesis speakers count as false alarm, missing ones
// as miss.
inline DerBreakdown der(const std::vector<uint8_t>& ref, int64_t ref_speakers,
                        const std::vector<uint8_t>& hyp, int64_t hyp_speakers, int64_t frames,
                        double collar_s = 0.0, int64_t median_frames = 11,
                        double frame_seconds = 0.008) {
  if (static_cast<int64_t>(ref.size()) != ref_speakers * frames ||
      static_cast<int64_t>(hyp.size()) != hyp_speakers * frames)
    throw ShapeError("der: label matrix sizes do not match frame count");
  std::vector<uint8_t> hyp_f = hyp;
  for (int64_t c = 0; c < hyp_speakers; ++c)
    median_filter_inplace(&hyp_f[static_cast<size_t>(c * frames)], frames, median_frames);

  std::vector<uint8_t> scored(static_cast<size_t>(frames), 1);
  if (collar_s > 0.0) {
    const auto radius = static_cast<int64_t>(std::llround(collar_s / frame_seconds));
    for (int64_t c = 0; c < ref_speakers; ++c) {
      const uint8_t* row = &ref[static_cast<size_t>(c * frames)];
      for (int64_t t = 0; t <= frames; ++t) {
        const uint8_t prev = t > 0 ? row[t - 1] : 0;
        const uint8_t cur = t < frames ? row[t] : 0;
        if (prev != cur)
          for (int64_t j = std::max<int64_t>(0, t - radius);
               j < std::min(frames, t + radius); ++j)
            scored[static_cast<size_t>(j)] = 0;
      }
    }
  }

  // Overlap counts for the optimal mapping.
  const int64_t big = std::max(ref_speakers, hyp_speakers);
  std::vector<std::vector<double>> cost(static_cast<size_t>(big),
                                        std::vector<double>(static_cast<size_t>(big), 0.0));
  for (int64_t i = 0; i < ref_speakers; ++i)
    for (int64_t j = 0; j < hyp_speakers; ++j) {
      int64_t overlap = 0;
      for (int64_t t = 0; t < frames; ++t)
        if (scored[static_cast<size_t>(t)] && ref[static_cast<size_t>(i * frames + t)] &&
            hyp_f[static_cast<size_t>(j * frames + t)])
          ++overlap;
      cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = -static_cast<double>(overlap);
    }
  const auto assign = hungarian_min(cost);
  std::vector<int> ref_to_hyp(static_cast<size_t>(ref_speakers), -1);
  for (int64_t i = 0; i < ref_speakers; ++i) {
    const int j = assign[static_cast<size_t>(i)];
    if (j < hyp_speakers) ref_to_hyp[static_cast<size_t>(i)] = j;
  }

  int64_t miss = 0, fa = 0, conf = 0, total_ref = 0;
  for (int64_t t = 0; t < frames; ++t) {
    if (!scored[static_cast<size_t>(t)]) continue;
    int64_t n_ref = 0, n_hyp = 0, n_correct = 0;
    for (int64_t i = 0; i < ref_speakers; ++i)
      if (ref[static_cast<size_t>(i * frames + t)]) {
        ++n_ref;
        const int j = ref_to_hyp[static_cast<size_t>(i)];
        if (j >= 0 && hyp_f[static_cast<size_t>(j * frames + t)]) ++n_correct;
      }
    for (int64_t j = 0; j < hyp_speakers; ++j)
      if (hyp_f[static_cast<size_t>(j * frames + t)]) ++n_hyp;
    total_ref += n_ref;
    miss += std::max<int64_t>(n_ref - n_hyp, 0);
    fa += std::max<int64_t>(n_hyp - n_ref, 0);
    conf += std::min(n_ref, n_hyp) - n_correct;
  }
  DerBreakdown out;
  out.ref_speech_frames = total_ref;
  if (total_ref == 0) {
    out.defined = false;
    out.der_pct = out.miss_pct = out.fa_pct = out.conf_pct =
        std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double denom = static_cast<double>(total_ref);
  out.miss_pct = 100.0 * static_cast<double>(miss) / denom;
  out.fa_pct = 100.0 * static_cast<double>(fa) / denom;
  out.conf_pct = 100.0 * static_cast<double>(conf) / denom;
  out.der_pct = out.miss_pct + out.fa_pct + out.conf_pct;
  return out;
}

// ---------------------------------------------------------------------------
// Separation metrics.
// ---------------------------------------------------------------------------

inline double si_sdr_db(const std::vector<float>& est, const std::vector<float>& ref) {
  if (est.size() != ref.size()) throw ShapeError("si_sdr: length mismatch");
  double dot = 0.0, ref_e = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    dot += static_cast<double>(est[i]) * ref[i];
    ref_e += static_cast<double>(ref[i]) * ref[i];
  }
  if (ref_e == 0.0) throw ValueError("si_sdr: all-zero reference");
  const double alpha = dot / ref_e;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double target = alpha * ref[i];
    num += target * target;
    const double resid = est[i] - target;
    den += resid * resid;
  }
  const double v = 10.0 * std::log10((num + kMetricEps) / (den + kMetricEps));
  return std::clamp(v, -kMetricClampDb, kMetricClampDb);
}

inline double si_sdr_improvement_db(const std::vector<float>& est, const std::vector<float>& ref,
                                    const std::vector<float>& mix) {
  return si_sdr_db(est, ref) - si_sdr_db(mix, ref);
}

namespace detail {

// Solves (A + ridge I) x = b for symmetric positive semidefinite A.
inline std::vector<double> cholesky_solve(std::vector<std::vector<double>> a,
                                          std::vector<double> b, double ridge) {
  const size_t n = a.size();
  for (size_t i = 0; i < n; ++i) a[i][i] += ridge;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      if (i == j) {
        if (s <= 0.0) s = ridge;  // numerical floor
        a[i][i] = std::sqrt(s);
      } else {
        a[i][j] = s / a[j][j];
      }
    }
  }
  for (size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (size_t i = n; i-- > 0;) {
    double s = b[i];
    for (size_t k = i + 1; k < n; ++k) s -= a[k][i] * b[k];
    b[i] = s / a[i][i];
  }
  return b;
}

}  // namespace detail

// Classic BSS-eval style SDR: the target is the least-squares projection of
// the estimate onto the subspace spanned by 512 delayed copies of the
// reference (ridge 1e-8 keeps the system solvable).
inline double sdr_db(const std::vector<float>& est, const std::vector<float>& ref,
                     int64_t taps = kSdrFilterTaps) {
  if (est.size() != ref.size()) throw ShapeError("sdr: length mismatch");
  const int64_t n = static_cast<int64_t>(ref.size());
  taps = std::min(taps, n);
  double ref_e = 0.0;
  for (float v : ref) ref_e += static_cast<double>(v) * v;
  if (ref_e == 0.0) throw ValueError("sdr: all-zero reference");

  // Toeplitz autocorrelation of the reference and cross-correlation with
  // the estimate (causal delays).
  std::vector<double> r_ss(static_cast<size_t>(taps), 0.0),
      r_es(static_cast<size_t>(taps), 0.0);
  for (int64_t lag = 0; lag < taps; ++lag) {
    double a = 0.0, c = 0.0;
    for (int64_t t = lag; t < n; ++t) {
      a += static_cast<double>(ref[static_cast<size_t>(t)]) * ref[static_cast<size_t>(t - lag)];
      c += static_cast<double>(est[static_cast<size_t>(t)]) * ref[static_cast<size_t>(t - lag)];
    }
    r_ss[static_cast<size_t>(lag)] = a;
    r_es[static_cast<size_t>(lag)] = c;
  }
  std::vector<std::vector<double>> gram(static_cast<size_t>(taps),
                                        std::vector<double>(static_cast<size_t>(taps)));
  for (int64_t i = 0; i < taps; ++i)
    for (int64_t j = 0; j < taps; ++j)
      gram[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          r_ss[static_cast<size_t>(std::abs(i - j))];
  const auto h = detail::cholesky_solve(gram, r_es, kMetricEps);

  double target_e = 0.0, dist_e = 0.0;
  for (int64_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (int64_t k = 0; k <= std::min<int64_t>(t, taps - 1); ++k)
      s += h[static_cast<size_t>(k)] * ref[static_cast<size_t>(t - k)];
    target_e += s * s;
    const double e = est[static_cast<size_t>(t)] - s;
    dist_e += e * e;
  }
  const double v = 10.0 * std::log10((target_e + kMetricEps) / (dist_e + kMetricEps));
  return std::clamp(v, -kMetricClampDb, kMetricClampDb);
}

inline double sdr_improvement_db(const std::vector<float>& est, const std::vector<float>& ref,
                                 const std::vector<float>& mix) {
  return sdr_db(est, ref) - sdr_db(mix, ref);
}

// ---------------------------------------------------------------------------
// STOI.
// ---------------------------------------------------------------------------

inline constexpr int kStoiBands = 15;
inline constexpr double kStoiFirstBandHz = 150.0;
inline constexpr int64_t kStoiFrameLen = 256;   // 32 ms at 8 kHz
inline constexpr int64_t kStoiHop = 128;        // 16 ms
inline constexpr int64_t kStoiFft = 512;
inline constexpr int kStoiSegmentFrames = 24;   // 384 ms analysis segments
inline constexpr double kStoiClipDb = -15.0;
inline constexpr double kStoiSilenceDb = 40.0;

// Short-time objective intelligibility at 8 kHz: one-third-octave band
// energies, 384 ms segments, clipped normalized correlation averaged over
// bands and segments. Reference-silent frames are removed from both
// signals first; returns 0 when nothing remains.
inline double stoi(const std::vector<float>& est, const std::vector<float>& ref,
                   int sample_rate = kSampleRate) {
  if (sample_rate != kSampleRate)
    throw ValueError("stoi: only 8 kHz supported, got " + std::to_string(sample_rate));
  if (est.size() != ref.size()) throw ShapeError("stoi: length mismatch");
  const int64_t min_len = kStoiFrameLen + (kStoiSegmentFrames - 1) * kStoiHop;  // 384 ms
  if (static_cast<int64_t>(ref.size()) < min_len)
    throw ValueError("stoi: signal shorter than one 384 ms analysis segment");

  auto px = stft_power(ref, kStoiFrameLen, kStoiHop, kStoiFft);
  auto py = stft_power(est, kStoiFrameLen, kStoiHop, kStoiFft);

  // Remove frames whose reference energy is 40 dB below the loudest frame.
  std::vector<int64_t> keep;
  double max_e = 0.0;
  std::vector<double> frame_e(static_cast<size_t>(px.num_frames), 0.0);
  for (int64_t t = 0; t < px.num_frames; ++t) {
    double e = 0.0;
    for (int64_t k = 0; k < px.dim; ++k) e += px.frame(t)[k];
    frame_e[static_cast<size_t>(t)] = e;
    max_e = std::max(max_e, e);
  }
  const double floor_e = max_e * std::pow(10.0, -kStoiSilenceDb / 10.0);
  for (int64_t t = 0; t < px.num_frames; ++t)
    if (frame_e[static_cast<size_t>(t)] > floor_e) keep.push_back(t);
  if (static_cast<int>(keep.size()) < kStoiSegmentFrames) return 0.0;

  // One-third-octave band energies.
  const double bin_hz = static_cast<double>(sample_rate) / kStoiFft;
  std::vector<std::pair<int64_t, int64_t>> bands;
  for (int k = 0; k < kStoiBands; ++k) {
    const double cf = kStoiFirstBandHz * std::pow(2.0, k / 3.0);
    const double lo = cf / std::pow(2.0, 1.0 / 6.0), hi = cf * std::pow(2.0, 1.0 / 6.0);
    auto lo_bin = static_cast<int64_t>(std::ceil(lo / bin_hz));
    auto hi_bin = std::min<int64_t>(static_cast<int64_t>(std::floor(hi / bin_hz)), px.dim - 1);
    if (lo_bin > hi_bin) lo_bin = hi_bin;
    bands.emplace_back(lo_bin, hi_bin);
  }
  const auto frames = static_cast<int64_t>(keep.size());
  std::vector<double> bx(static_cast<size_t>(frames * kStoiBands));
  std::vector<double> by(static_cast<size_t>(frames * kStoiBands));
  for (int64_t m = 0; m < frames; ++m) {
    const int64_t t = keep[static_cast<size_t>(m)];
    for (int j = 0; j < kStoiBands; ++j) {
      double ex = 0.0, ey = 0.0;
      for (int64_t k = bands[static_cast<size_t>(j)].first;
           k <= bands[static_cast<size_t>(j)].second; ++k) {
        ex += px.frame(t)[k];
        ey += py.frame(t)[k];
      }
      bx[static_cast<size_t>(m * kStoiBands + j)] = std::sqrt(ex);
      by[static_cast<size_t>(m * kStoiBands + j)] = std::sqrt(ey);
    }
  }

  const double clip_factor = std::pow(10.0, -kStoiClipDb / 20.0);  // 10^(15/20)
  double sum = 0.0;
  int64_t count = 0;
  for (int64_t m = kStoiSegmentFrames - 1; m < frames; ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      double xs[kStoiSegmentFrames], ys[kStoiSegmentFrames];
      double ex = 0.0, ey = 0.0;
      for (int i = 0; i < kStoiSegmentFrames; ++i) {
        xs[i] = bx[static_cast<size_t>((m - kStoiSegmentFrames + 1 + i) * kStoiBands + j)];
        ys[i] = by[static_cast<size_t>((m - kStoiSegmentFrames + 1 + i) * kStoiBands + j)];
        ex += xs[i] * xs[i];
        ey += ys[i] * ys[i];
      }
      const double scale = ey > 0.0 ? std::sqrt(ex / ey) : 0.0;
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < kStoiSegmentFrames; ++i) {
        ys[i] = std::min(ys[i] * scale, xs[i] * clip_factor);
        mx += xs[i];
        my += ys[i];
      }
      mx /= kStoiSegmentFrames;
      my /= kStoiSegmentFrames;
      double num = 0.0, vx = 0.0, vy = 0.0;
      for (int i = 0; i < kStoiSegmentFrames; ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
      }
      if (vx > 0.0 && vy > 0.0) sum += num / std::sqrt(vx * vy);
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------------------
// Count-mismatch protocol and counting accuracy.
// ---------------------------------------------------------------------------

// Appends |C - C_hat| silent signals (constant amplitude 1e-6) to the
// shorter list; the longer list is never altered.
inline void pad_for_count_mismatch(std::vector<std::vector<float>>* refs,
                                   std::vector<std::vector<float>>* ests) {
  if (refs->empty() && ests->empty())
    throw ValueError("pad_for_count_mismatch: both signal lists empty");
  const size_t len = refs->empty() ? (*ests)[0].size() : (*refs)[0].size();
  auto* shorter = refs->size() < ests->size() ? refs : ests;
  const size_t target = std::max(refs->size(), ests->size());
  while (shorter->size() < target)
    shorter->emplace_back(len, kSilentPadAmplitude);
}

inline double speaker_counting_accuracy(const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) throw ValueError("speaker_counting_accuracy: empty input");
  int64_t correct = 0;
  for (auto [c, c_hat] : pairs) correct += (c == c_hat) ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Per-utterance separation scoring with permutation alignment.
// ---------------------------------------------------------------------------

struct SeparationScores {
  double si_sdri = 0.0;
  double sdri = 0.0;
  double stoi_score = 0.0;
  std::vector<int> permutation;  // est index -> ref index
};

// Pads for count mismatch, aligns by the permutation maximizing the summed
// SI-SDR, then averages per-source improvements under that alignment.
inline SeparationScores score_separation(std::vector<std::vector<float>> ests,
                                         std::vector<std::vector<float>> refs,
                                         const std::vector<float>& mix) {
  pad_for_count_mismatch(&refs, &ests);
  const int k = static_cast<int>(refs.size());
  if (k > kMaxPitSpeakers) throw ValueError("score_separation: too many sources");
  std::vector<std::vector<double>> si(static_cast<size_t>(k),
                                      std::vector<double>(static_cast<size_t>(k)));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      si[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          si_sdr_db(ests[static_cast<size_t>(i)], refs[static_cast<size_t>(j)]);
  const auto perms = permutations(k);
  double best = -std::numeric_limits<double>::infinity();
  size_t best_i = 0;
  for (size_t pi = 0; pi < perms.size(); ++pi) {
    double v = 0.0;
    for (int i = 0; i < k; ++i)
      v += si[static_cast<size_t>(i)][static_cast<size_t>(perms[pi][static_cast<size_t>(i)])];
    if (v > best) {
      best = v;
      best_i = pi;
    }
  }
  SeparationScores out;
  out.permutation = perms[best_i];
  for (int i = 0; i < k; ++i) {
    const auto& ref = refs[static_cast<size_t>(perms[best_i][static_cast<size_t>(i)])];
    const auto& est = ests[static_cast<size_t>(i)];
    out.si_sdri += si_sdr_improvement_db(est, ref, mix);
    out.sdri += sdr_improvement_db(est, ref, mix);
    out.stoi_score += stoi(est, ref);
  }
  out.si_sdri /= k;
  out.sdri /= k;
  out.stoi_score /= k;
  return out;
}

}  // namespace eendss

#endif  // EENDSS_METRICS_HPP_
