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

#include "eendss/eendss.hpp"

using namespace eendss;

namespace {

DiarizationConfig small_cfg(bool lmf = false) {
  DiarizationConfig cfg;
  cfg.in_dim = 16;
  cfg.dim = 24;
  cfg.tf_layers = 2;
  cfg.tf_heads = 2;
  cfg.tf_ff = 48;
  cfg.lmf_concat = lmf;
  cfg.n_mels = 10;
  return cfg;
}

int64_t param_count(DiarizationNet& net) {
  NamedParams p;
  net.collect("d", &p);
  int64_t n = 0;
  for (auto& [name, t] : p) n += t.numel();
  return n;
}

}  // namespace

TEST(DiarEmbed, ShapeContract) {
  Rng rng(1);
  auto cfg = small_cfg();
  DiarizationNet net(cfg, rng);
  auto e_tcn = Tensor::filled({16, 100}, 0.2f);
  auto emb = net.embed(e_tcn);
  EXPECT_EQ(emb.dim(0), 12);  // floor(100/8)
  EXPECT_EQ(emb.dim(1), cfg.dim);
}

TEST(DiarEmbed, ParamCountDiffersOnlyInInputProjection) {
  Rng r1(2), r2(2);
  auto plain_cfg = small_cfg(false);
  auto lmf_cfg = small_cfg(true);
  DiarizationNet plain(plain_cfg, r1), with_lmf(lmf_cfg, r2);
  const int64_t diff = param_count(with_lmf) - param_count(plain);
  EXPECT_EQ(diff, lmf_cfg.n_mels * lmf_cfg.dim);  // extra in_proj rows only
}

TEST(DiarEmbed, MisalignedLmfRejected) {
  Rng rng(3);
  DiarizationNet net(small_cfg(true), rng);
  auto e_tcn = Tensor::filled({16, 100}, 0.2f);  // 12 subsampled frames
  auto bad = Tensor::filled({11, 10}, 0.0f);
  EXPECT_THROW(net.embed(e_tcn, bad), ShapeError);
  EXPECT_THROW(net.embed(e_tcn), ValueError);  // LMF required but absent
  auto good = Tensor::filled({12, 10}, 0.0f);
  EXPECT_EQ(net.embed(e_tcn, good).dim(0), 12);
}

TEST(DiarEmbed, TooFewFramesRejected) {
  Rng rng(4);
  DiarizationNet net(small_cfg(), rng);
  EXPECT_THROW(net.embed(Tensor::filled({16, 7}, 0.1f)), ShapeError);
}

TEST(Eda, AttractorCountEqualsCStop) {
  Rng rng(5);
  DiarizationNet net(small_cfg(), rng);
  auto emb = net.embed(Tensor::filled({16, 64}, 0.1f));
  for (int64_t c_stop : {1, 2, 5}) {
    auto att = net.generate_attractors(emb, c_stop);
    EXPECT_EQ(att.attractors.dim(0), c_stop);
    EXPECT_EQ(att.existence.numel(), c_stop);
    for (float q : att.existence.value()) {
      EXPECT_GT(q, 0.0f);
      EXPECT_LT(q, 1.0f);
    }
  }
}

TEST(Eda, DeterministicGivenFrozenWeights) {
  Rng rng(6);
  DiarizationNet net(small_cfg(), rng);
  auto emb = net.embed(Tensor::filled({16, 64}, 0.3f));
  auto a1 = net.generate_attractors(emb, 3);
  auto a2 = net.generate_attractors(emb, 3);
  EXPECT_EQ(a1.attractors.value(), a2.attractors.value());
  EXPECT_EQ(a1.existence.value(), a2.existence.value());
}

TEST(Eda, EmptyEmbeddingRejectedAndBadCStop) {
  Rng rng(7);
  DiarizationNet net(small_cfg(), rng);
  auto emb = net.embed(Tensor::filled({16, 64}, 0.1f));
  EXPECT_THROW(net.generate_attractors(emb, 0), ValueError);
  EXPECT_THROW(net.generate_attractors(Tensor::zeros({0, 24}), 2), ValueError);
}

TEST(Eda, ExistenceLabelsPerDefinition) {
  auto l = existence_labels<float>(2);
  EXPECT_EQ(l, (std::vector<float>{1.0f, 1.0f, 0.0f}));
}

TEST(Posteriors, OrthogonalAttractorGivesHalf) {
  Rng rng(8);
  DiarizationNet net(small_cfg(), rng);
  auto emb = Tensor::zeros({5, 24});
  auto att = Tensor::filled({2, 24}, 0.7f);
  auto p = net.posteriors(emb, att);  // zero dot products everywhere
  for (float v : p.value()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Posteriors, HandCheckLn3) {
  Rng rng(9);
  DiarizationNet net(small_cfg(), rng);
  std::vector<float> e(24, 0.0f), a(24, 0.0f);
  e[0] = 1.0f;
  a[0] = static_cast<float>(std::log(3.0));
  auto p = net.posteriors(Tensor::from_vec({1, 24}, e), Tensor::from_vec({1, 24}, a));
  EXPECT_NEAR(p.item(), 0.75f, 1e-6f);
}

TEST(Posteriors, ScalingAttractorSaturates) {
  Rng rng(10);
  DiarizationNet net(small_cfg(), rng);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<float> e(5 * 24), a(24);
  for (auto& v : e) v = d(rng);
  for (auto& v : a) v = d(rng);
  auto emb = Tensor::from_vec({5, 24}, e);
  std::vector<float> big(a);
  for (auto& v : big) v *= 50.0f;
  auto p = net.posteriors(emb, Tensor::from_vec({1, 24}, big));
  for (float v : p.value()) EXPECT_TRUE(v < 1e-3f || v > 1.0f - 1e-3f);
}

TEST(CountSpeakers, PrefixRuleExamples) {
  EXPECT_EQ(count_speakers({0.9f, 0.8f, 0.3f}, 0.5f), 2);
  EXPECT_EQ(count_speakers({0.9f, 0.3f, 0.8f}, 0.5f), 1);
  EXPECT_EQ(count_speakers({0.4f}, 0.5f), 0);
}

TEST(CountSpeakers, MonotoneInTauAndMatchesOracle) {
  Rng rng(11);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> q(1 + rng() % 5);
    for (auto& v : q) v = d(rng);
    int64_t prev = std::numeric_limits<int64_t>::max();
    for (float tau : {0.1f, 0.3f, 0.5f, 0.7f, 0.9f}) {
      const int64_t c = count_speakers(q, tau);
      int64_t oracle = 0;
      while (oracle < static_cast<int64_t>(q.size()) &&
             q[static_cast<size_t>(oracle)] > tau)
        ++oracle;
      EXPECT_EQ(c, oracle);
      EXPECT_LE(c, prev);  // non-increasing in tau
      prev = c;
    }
  }
}

TEST(CountSpeakers, InputValidation) {
  EXPECT_THROW(count_speakers({}, 0.5f), ValueError);
  EXPECT_THROW(count_speakers({0.5f}, 1.5f), ValueError);
}

TEST(Binarize, AllHighGivesAllOnes) {
  std::vector<float> p(20, 0.9f);
  auto labels = binarize(p, 1, 20, 0.5f, 11);
  for (auto v : labels) EXPECT_EQ(v, 1);
}

TEST(Binarize, IsolatedSpikeRemovedByMedian) {
  std::vector<float> p(21, 0.1f);
  p[10] = 0.95f;
  auto labels = binarize(p, 1, 21, 0.5f, 11);
  for (auto v : labels) EXPECT_EQ(v, 0);
}

// Direct median oracle on the thresholded sequence.
TEST(Binarize, MatchesDirectMedianOracle) {
  Rng rng(12);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t t_len = 30 + static_cast<int64_t>(rng() % 40);
    std::vector<float> p(static_cast<size_t>(t_len));
    for (auto& v : p) v = d(rng);
    // alternating-style pattern mixed with random
    for (int64_t i = 0; i < t_len; i += 2) p[static_cast<size_t>(i)] = 0.9f;
    auto labels = binarize(p, 1, t_len, 0.5f, 11);
    for (int64_t i = 0; i < t_len; ++i) {
      const int64_t lo = std::max<int64_t>(0, i - 5), hi = std::min(t_len - 1, i + 5);
      int64_t ones = 0;
      for (int64_t j = lo; j <= hi; ++j) ones += p[static_cast<size_t>(j)] >= 0.5f ? 1 : 0;
      // window-majority value; even shrunken edge windows tie to 0
      const uint8_t median = (2 * ones > hi - lo + 1) ? 1 : 0;
      EXPECT_EQ(labels[static_cast<size_t>(i)], median) << "pos " << i;
    }
  }
}

TEST(Binarize, InvariantToCrossingPreservingRescale) {
  Rng rng(13);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  std::vector<float> p(40);
  for (auto& v : p) v = d(rng);
  auto base = binarize(p, 1, 40, 0.5f, 11);
  std::vector<float> squeezed(p);
  for (auto& v : squeezed) v = 0.5f + 0.400f * (v - 0.5f);  // preserves the 0.5 crossing pattern
  EXPECT_EQ(binarize(squeezed, 1, 40, 0.5f, 11), base);
}

TEST(Binarize, OddWidthRequired) {
  std::vector<float> p(10, 0.9f);
  EXPECT_THROW(binarize(p, 1, 10, 0.5f, 10), ValueError);
}
