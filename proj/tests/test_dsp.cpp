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

#include <gtest/gtest.h>

#include <numbers>

#include "eendss/eendss.hpp"

using namespace eendss;

TEST(StftPower, ZeroInputGivesZeroFrames) {
  Waveform x(2048, 0.0f);
  auto p = stft_power(x, 512, 64);
  for (float v : p.values) EXPECT_EQ(v, 0.0f);
}

TEST(StftPower, FramingFormula) {
  Waveform x(512, 0.1f);
  auto p = stft_power(x, 512, 64);
  EXPECT_EQ(p.num_frames, 1);
  EXPECT_EQ(p.dim, 257);
  Waveform y(512 + 64 * 3, 0.1f);
  EXPECT_EQ(stft_power(y, 512, 64).num_frames, 4);
}

TEST(StftPower, TooShortSignalRejected) {
  Waveform x(100, 0.0f);
  EXPECT_THROW(stft_power(x, 512, 64), ValueError);
}

// Direct-DFT oracle on a bin-center sinusoid. With the Hann window the
// energy sits in the peak bin and its two neighbours (1/4, 1/2, 1/4 in
// amplitude), so the frozen oracle expectation is: correct peak bin and
// >= 99% of the energy within the 3-bin neighbourhood.
TEST(StftPower, BinCenterSinusoidMatchesDftOracle) {
  const int64_t n = 512;
  const int64_t bin = 32;
  Waveform x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    x[static_cast<size_t>(i)] = static_cast<float>(
        std::sin(2.0 * std::numbers::pi * static_cast<double>(bin * i) / static_cast<double>(n)));
  auto p = stft_power(x, n, n);
  ASSERT_EQ(p.num_frames, 1);

  // oracle: direct DFT of the Hann-windowed frame
  auto win = hann_window(n);
  std::vector<double> oracle(static_cast<size_t>(p.dim));
  for (int64_t k = 0; k < p.dim; ++k) {
    double re = 0.0, im = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double v = static_cast<double>(x[static_cast<size_t>(i)]) * win[static_cast<size_t>(i)];
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n);
      re += v * std::cos(ang);
      im += v * std::sin(ang);
    }
    oracle[static_cast<size_t>(k)] = re * re + im * im;
  }
  double total = 0.0, top3 = 0.0;
  int64_t peak = 0;
  for (int64_t k = 0; k < p.dim; ++k) {
    EXPECT_NEAR(p.frame(0)[k], oracle[static_cast<size_t>(k)],
                1e-5 * (1.0 + oracle[static_cast<size_t>(k)]));
    total += p.frame(0)[k];
    if (p.frame(0)[k] > p.frame(0)[peak]) peak = k;
  }
  EXPECT_EQ(peak, bin);
  for (int64_t k = bin - 1; k <= bin + 1; ++k) top3 += p.frame(0)[k];
  EXPECT_GE(top3 / total, 0.99);
}

TEST(StftPower, EnergyNonNegative) {
  Rng rng(9);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Waveform x(4000);
  for (auto& v : x) v = d(rng);
  for (float v : stft_power(x, 512, 64).values) EXPECT_GE(v, 0.0f);
}

TEST(LogMel, ZeroPowerHitsFloor) {
  FrameSequence p;
  p.num_frames = 3;
  p.dim = 257;
  p.frame_hop_samples = 64;
  p.values.assign(3 * 257, 0.0f);
  auto m = log_mel(p, 80, kSampleRate);
  for (float v : m.values) EXPECT_FLOAT_EQ(v, static_cast<float>(std::log(1e-10)));
}

TEST(LogMel, FilterbankRowsPositiveAndOverlapping) {
  auto fb = mel_filterbank(80, 257, kSampleRate, 512);
  for (int64_t m = 0; m < 80; ++m) {
    double row_sum = 0.0;
    for (int64_t k = 0; k < 257; ++k) row_sum += fb[static_cast<size_t>(m * 257 + k)];
    EXPECT_GT(row_sum, 0.0) << "row " << m;
    if (m + 1 < 80) {
      bool overlaps = false;
      for (int64_t k = 0; k < 257; ++k)
        if (fb[static_cast<size_t>(m * 257 + k)] > 0 &&
            fb[static_cast<size_t>((m + 1) * 257 + k)] > 0)
          overlaps = true;
      EXPECT_TRUE(overlaps) << "rows " << m << "," << m + 1;
    }
  }
}

TEST(LogMel, NMelsBounds) {
  FrameSequence p;
  p.num_frames = 1;
  p.dim = 17;
  p.frame_hop_samples = 64;
  p.values.assign(17, 1.0f);
  EXPECT_THROW(log_mel(p, 18, kSampleRate), ValueError);
}

// Statistical oracle: white noise has flat expected power, so with
// area-normalized filters the 100-frame-average mel energies stay within a
// small max/min ratio.
TEST(LogMel, WhiteNoiseRoughlyFlat) {
  Rng rng(123);
  std::normal_distribution<float> gauss(0.0f, 0.3f);
  Waveform x(static_cast<size_t>(512 + 64 * 99));
  for (auto& v : x) v = gauss(rng);
  auto m = log_mel(stft_power(x, 512, 64), 80, kSampleRate);
  ASSERT_EQ(m.num_frames, 100);
  std::vector<double> mean(80, 0.0);
  for (int64_t t = 0; t < m.num_frames; ++t)
    for (int64_t b = 0; b < 80; ++b) mean[static_cast<size_t>(b)] += std::exp(m.frame(t)[b]);
  double lo = 1e300, hi = 0.0;
  for (double v : mean) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(hi / lo, 10.0);
}

TEST(LogMel, MonotoneInPowerScale) {
  Rng rng(5);
  std::uniform_real_distribution<float> d(0.1f, 1.0f);
  FrameSequence p;
  p.num_frames = 4;
  p.dim = 257;
  p.frame_hop_samples = 64;
  p.values.resize(4 * 257);
  for (auto& v : p.values) v = d(rng);
  auto base = log_mel(p, 40, kSampleRate);
  FrameSequence scaled = p;
  for (auto& v : scaled.values) v *= 3.0f;
  auto boosted = log_mel(scaled, 40, kSampleRate);
  for (size_t i = 0; i < base.values.size(); ++i)
    EXPECT_GT(boosted.values[i], base.values[i]);
}

TEST(FrameMath, SubsampleArithmetic) {
  EXPECT_EQ(subsampled_num_frames(64, 8), 8);
  EXPECT_EQ(subsampled_num_frames(65, 8), 8);
  EXPECT_EQ(subsampled_num_frames(63, 8), 7);
  // encoder stride 8 then 1/8 subsampling gives hop 64 = the LMF frameshift
  EXPECT_EQ(kEncStride * kSubsample, 64);
}

TEST(FrameMath, LmfAlignsWithDiarFrames) {
  for (int64_t n : {8000, 16000, 12345, 5000}) {
    Waveform x(static_cast<size_t>(n), 0.01f);
    const int64_t t_d = label_frames_for(n);
    auto lmf = lmf_for_diar(x, 512, 64, 80, t_d);
    EXPECT_EQ(lmf.num_frames, t_d);
    EXPECT_EQ(lmf.dim, 80);
    EXPECT_EQ(lmf.frame_hop_samples, 64);
  }
}
