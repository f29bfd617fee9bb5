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
// Signal-processing frontend: Hann STFT power spectra and log-mel
// filterbank features (HTK mel scale, area-normalized triangles).
// Pure functions over immutable inputs; no autodiff involvement.

#ifndef EENDSS_DSP_HPP_
#define EENDSS_DSP_HPP_

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "eendss/common.hpp"

namespace eendss {

using Waveform = std::vector<float>;

// Time-major matrix of feature vectors at a fixed frame rate.
struct FrameSequence {
  int64_t num_frames = 0;
  int64_t dim = 0;
  std::vector<float> values;  // num_frames x dim, row-major
  int64_t frame_hop_samples = 0;

  const float* frame(int64_t t) const { return values.data() + t * dim; }
  float* frame(int64_t t) { return values.data() + t * dim; }
};

inline int64_t stft_num_frames(int64_t len, int64_t frame_len, int64_t hop) {
  return (len - frame_len) / hop + 1;
}

// Output frame count of a strided 1-D convolution without padding.
inline int64_t conv_num_frames(int64_t len, int64_t kernel, int64_t stride) {
  return (len - kernel) / stride + 1;
}

inline int64_t subsampled_num_frames(int64_t frames, int64_t factor) {
  return frames / factor;
}

namespace detail {

inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (n <= 1) return;
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t j = 0; j < len / 2; ++j) {
        auto u = a[i + j];
        auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace detail

inline std::vector<float> hann_window(int64_t n) {
  std::vector<float> w(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = static_cast<float>(
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(n)));
  return w;
}

// Squared-magnitude spectrum per Hann-windowed frame, zero-padded to
// fft_len (default frame_len); dim fft_len/2 + 1.
inline FrameSequence stft_power(const Waveform& x, int64_t frame_len, int64_t hop,
                                int64_t fft_len = 0) {
  if (fft_len <= 0) fft_len = frame_len;
  if (frame_len < hop) throw ValueError("stft_power: frame_len must be >= hop");
  if (fft_len < frame_len) throw ValueError("stft_power: fft_len must be >= frame_len");
  if (static_cast<int64_t>(x.size()) < frame_len)
    throw ValueError("stft_power: signal shorter than one frame (" +
                     std::to_string(x.size()) + " < " + std::to_string(frame_len) + ")");
  const int64_t n_frames = stft_num_frames(static_cast<int64_t>(x.size()), frame_len, hop);
  const int64_t n_bins = fft_len / 2 + 1;
  const auto win = hann_window(frame_len);
  FrameSequence out;
  out.num_frames = n_frames;
  out.dim = n_bins;
  out.frame_hop_samples = hop;
  out.values.resize(static_cast<size_t>(n_frames * n_bins));

  std::vector<std::complex<double>> buf(static_cast<size_t>(fft_len));
  for (int64_t t = 0; t < n_frames; ++t) {
    const float* src = x.data() + t * hop;
    for (int64_t i = 0; i < frame_len; ++i)
      buf[static_cast<size_t>(i)] = {static_cast<double>(src[i]) * win[static_cast<size_t>(i)],
                                     0.0};
    std::fill(buf.begin() + frame_len, buf.end(), std::complex<double>(0.0));
    if (detail::is_pow2(fft_len)) {
      detail::fft_inplace(buf);
      for (int64_t k = 0; k < n_bins; ++k)
        out.frame(t)[k] = static_cast<float>(std::norm(buf[static_cast<size_t>(k)]));
    } else {
      // direct DFT fallback for non-power-of-two lengths
      for (int64_t k = 0; k < n_bins; ++k) {
        std::complex<double> acc(0.0);
        for (int64_t i = 0; i < frame_len; ++i) {
          const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) /
                             static_cast<double>(fft_len);
          acc += buf[static_cast<size_t>(i)] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out.frame(t)[k] = static_cast<float>(std::norm(acc));
      }
    }
  }
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filters spanning 0..Nyquist, each normalized to unit area
// (2 / bandwidth) so flat input power maps to flat mel energies.
inline std::vector<float> mel_filterbank(int64_t n_mels, int64_t n_bins, double sample_rate,
                                         int64_t frame_len) {
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> centers(static_cast<size_t>(n_mels + 2));
  for (int64_t i = 0; i < n_mels + 2; ++i)
    centers[static_cast<size_t>(i)] =
        mel_to_hz(mel_max * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  std::vector<float> fb(static_cast<size_t>(n_mels * n_bins), 0.0f);
  const double bin_hz = sample_rate / static_cast<double>(frame_len);
  for (int64_t m = 0; m < n_mels; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m + 1)];
    const double hi = centers[static_cast<size_t>(m + 2)];
    const double norm = 2.0 / (hi - lo);
    for (int64_t k = 0; k < n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      fb[static_cast<size_t>(m * n_bins + k)] = static_cast<float>(w * norm);
    }
  }
  return fb;
}

inline constexpr double kLogMelFloor = 1e-10;

inline FrameSequence log_mel(const FrameSequence& power, int64_t n_mels, double sample_rate) {
  if (n_mels > power.dim)
    throw ValueError("log_mel: n_mels " + std::to_string(n_mels) + " exceeds spectral dim " +
                     std::to_string(power.dim));
  const int64_t frame_len = (power.dim - 1) * 2;
  const auto fb = mel_filterbank(n_mels, power.dim, sample_rate, frame_len);
  FrameSequence out;
  out.num_frames = power.num_frames;
  out.dim = n_mels;
  out.frame_hop_samples = power.frame_hop_samples;
  out.values.resize(static_cast<size_t>(out.num_frames * n_mels));
  for (int64_t t = 0; t < power.num_frames; ++t) {
    const float* p = power.frame(t);
    float* o = out.frame(t);
    for (int64_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const float* row = &fb[static_cast<size_t>(m * power.dim)];
      for (int64_t k = 0; k < power.dim; ++k) acc += static_cast<double>(row[k]) * p[k];
      o[m] = static_cast<float>(std::log(std::max(acc, kLogMelFloor)));
    }
  }
  return out;
}

// LMF features index-aligned with the diarization frame grid: the signal is
// zero-padded by frame_len - hop at the tail (so frame i exists for every
// hop offset i*hop < len) and the sequence trimmed to target_frames. Frame i
// of the result and diarization frame i both start at sample i*hop.
inline FrameSequence lmf_for_diar(const Waveform& x, int64_t frame_len, int64_t hop,
                                  int64_t n_mels, int64_t target_frames) {
  Waveform padded = x;
  padded.resize(x.size() + static_cast<size_t>(frame_len - hop), 0.0f);
  auto lmf = log_mel(stft_power(padded, frame_len, hop), n_mels, kSampleRate);
  if (lmf.num_frames < target_frames)
    throw ValueError("lmf_for_diar: " + std::to_string(lmf.num_frames) +
                     " frames cannot cover " + std::to_string(target_frames));
  lmf.values.resize(static_cast<size_t>(target_frames * lmf.dim));
  lmf.num_frames = target_frames;
  return lmf;
}

}  // namespace eendss

#endif  // EENDSS_DSP_HPP_
