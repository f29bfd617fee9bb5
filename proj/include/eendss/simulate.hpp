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
// Synthetic conversation-like mixture generator: x = sum_c y_c (.) s_c + n,
// with controllable speaker count, overlap ratio and noise. Sources are
// harmonic stacks with formant-like band shaping and 4 Hz syllabic
// amplitude modulation; distinct speakers get distinct fundamentals.

#ifndef EENDSS_SIMULATE_HPP_
#define EENDSS_SIMULATE_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eendss/dsp.hpp"
#include "eendss/rttm.hpp"
#include "eendss/wavio.hpp"

namespace eendss {

// Diarization label grid constants (encoder kernel 16 / stride 8, then 1/8
// temporal subsampling): one label frame per 64 samples.
inline constexpr int64_t kEncKernel = 16;
inline constexpr int64_t kEncStride = 8;
inline constexpr int64_t kSubsample = 8;
inline constexpr int64_t kLabelHop = kEncStride * kSubsample;  // 64 samples

inline int64_t label_frames_for(int64_t samples) {
  return subsampled_num_frames(conv_num_frames(samples, kEncKernel, kEncStride), kSubsample);
}

struct SourceSpec {
  double f0 = 150.0;  // fundamental, Hz
  std::vector<double> band_centers = {700.0, 1900.0};
  double band_width = 450.0;
  double am_rate_hz = 4.0;  // syllabic modulation
  double am_depth = 0.35;
  double rms = 0.15;  // active-region RMS, full scale
  // Utterance plan: (start, length) in samples. Empty = derive a random
  // utterance/pause structure from the seed.
  std::vector<std::pair<int64_t, int64_t>> segments;
  double utterance_s = 0.6;  // mean utterance length for derived plans
  double pause_s = 0.3;      // mean pause length for derived plans
  uint64_t seed = 0;
};

struct SourceSignal {
  Waveform wave;
  std::vector<uint8_t> activity;  // per-sample, 1 where envelope > 1% of peak
};

// Speech-like source: harmonic tone stack, band-pass shaped, syllabic AM.
// Strictly zero outside active samples.
inline SourceSignal synth_source(const SourceSpec& spec, double duration_s) {
  if (duration_s < 0.5) throw ValueError("synth_source: duration must be >= 0.5 s");
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * kSampleRate));
  Rng rng(spec.seed);

  auto segments = spec.segments;
  if (segments.empty()) {
    std::uniform_real_distribution<double> ujit(0.7, 1.3);
    int64_t pos = 0;
    while (pos < n) {
      const auto ulen =
          static_cast<int64_t>(spec.utterance_s * ujit(rng) * kSampleRate);
      const int64_t len = std::min(ulen, n - pos);
      if (len > kSampleRate / 20) segments.emplace_back(pos, len);
      pos += len + static_cast<int64_t>(spec.pause_s * ujit(rng) * kSampleRate);
    }
  }

  // Harmonic amplitudes from the formant-like bands.
  const int max_harm = static_cast<int>(3600.0 / spec.f0);
  std::vector<double> amp(static_cast<size_t>(max_harm)), phase(static_cast<size_t>(max_harm));
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < max_harm; ++k) {
    const double f = spec.f0 * (k + 1);
    double a = 0.05;
    for (double c : spec.band_centers) {
      const double d = (f - c) / spec.band_width;
      a += std::exp(-d * d);
    }
    amp[static_cast<size_t>(k)] = a / (1.0 + 0.3 * k);
    phase[static_cast<size_t>(k)] = uphase(rng);
  }

  SourceSignal out;
  out.wave.assign(static_cast<size_t>(n), 0.0f);
  out.activity.assign(static_cast<size_t>(n), 0);
  const int64_t ramp = kSampleRate / 200;  // 5 ms edges
  std::uniform_real_distribution<double> uam(0.0, 2.0 * std::numbers::pi);
  std::vector<double> env(static_cast<size_t>(n), 0.0);
  for (auto [start, len] : segments) {
    if (start < 0 || len <= 0 || start + len > n)
      throw ValueError("synth_source: utterance segment outside the timeline");
    const double am_phase = uam(rng);
    for (int64_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(start + i) / kSampleRate;
      double e = 1.0 - spec.am_depth +
                 spec.am_depth * 0.5 *
                     (1.0 + std::sin(2.0 * std::numbers::pi * spec.am_rate_hz * t + am_phase));
      if (i < ramp) e *= 0.5 * (1.0 - std::cos(std::numbers::pi * i / ramp));
      if (len - 1 - i < ramp)
        e *= 0.5 * (1.0 - std::cos(std::numbers::pi * (len - 1 - i) / ramp));
      env[static_cast<size_t>(start + i)] = e;
    }
  }
  double peak_env = 0.0;
  for (double e : env) peak_env = std::max(peak_env, e);
  if (peak_env <= 0.0) throw ValueError("synth_source: empty utterance plan");

  double energy = 0.0;
  int64_t active_count = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (env[static_cast<size_t>(i)] <= 0.01 * peak_env) continue;
    const double t = static_cast<double>(i) / kSampleRate;
    double s = 0.0;
    for (int k = 0; k < max_harm; ++k)
      s += amp[static_cast<size_t>(k)] *
           std::sin(2.0 * std::numbers::pi * spec.f0 * (k + 1) * t + phase[static_cast<size_t>(k)]);
    const double v = s * env[static_cast<size_t>(i)];
    out.wave[static_cast<size_t>(i)] = static_cast<float>(v);
    out.activity[static_cast<size_t>(i)] = 1;
    energy += v * v;
    ++active_count;
  }
  if (active_count > 0) {
    const double gain = spec.rms / std::sqrt(energy / static_cast<double>(active_count));
    for (auto& v : out.wave) v = static_cast<float>(v * gain);
  }
  return out;
}

struct MixtureSample {
  Waveform mix;
  std::vector<Waveform> sources;
  std::vector<std::vector<uint8_t>> activities;  // per speaker, per sample
  Waveform noise;
  std::vector<uint8_t> frame_labels;  // C x label_frames
  int64_t frame_count = 0;
  int speakers = 0;
  double overlap_requested = 0.0;
  double overlap_realized = 0.0;
};

// Fraction of speech samples (>=1 active) where >=2 speakers are active.
inline double realized_overlap(const std::vector<std::vector<uint8_t>>& activities) {
  if (activities.empty()) return 0.0;
  const size_t n = activities[0].size();
  int64_t speech = 0, overlapped = 0;
  for (size_t i = 0; i < n; ++i) {
    int active = 0;
    for (const auto& a : activities) active += a[i];
    if (active >= 1) ++speech;
    if (active >= 2) ++overlapped;
  }
  return speech == 0 ? 0.0 : static_cast<double>(overlapped) / static_cast<double>(speech);
}

// Frame label = 1 iff more than half of the frame's 64 samples are active.
inline std::vector<uint8_t> activity_to_frame_labels(
    const std::vector<std::vector<uint8_t>>& activities, int64_t frames) {
  const int64_t c_count = static_cast<int64_t>(activities.size());
  std::vector<uint8_t> labels(static_cast<size_t>(c_count * frames), 0);
  for (int64_t c = 0; c < c_count; ++c) {
    const auto& act = activities[static_cast<size_t>(c)];
    for (int64_t t = 0; t < frames; ++t) {
      int64_t ones = 0;
      for (int64_t i = t * kLabelHop; i < (t + 1) * kLabelHop; ++i)
        ones += act[static_cast<size_t>(i)];
      labels[static_cast<size_t>(c * frames + t)] = (2 * ones > kLabelHop) ? 1 : 0;
    }
  }
  return labels;
}

namespace detail {

// Chain placement: speaker c's turn starts at c*(turn - v). Returns the
// realized overlap ratio for the candidate pair-overlap v.
inline double chain_overlap(int speakers, int64_t turn, int64_t v) {
  std::vector<int64_t> starts(static_cast<size_t>(speakers));
  for (int c = 0; c < speakers; ++c) starts[static_cast<size_t>(c)] = c * (turn - v);
  const int64_t span = starts.back() + turn;
  int64_t speech = 0, over = 0;
  for (int64_t i = 0; i < span; ++i) {
    int active = 0;
    for (int c = 0; c < speakers; ++c)
      if (i >= starts[static_cast<size_t>(c)] && i < starts[static_cast<size_t>(c)] + turn)
        ++active;
    if (active >= 1) ++speech;
    if (active >= 2) ++over;
  }
  return speech == 0 ? 0.0 : static_cast<double>(over) / static_cast<double>(speech);
}

}  // namespace detail

// Places one turn per speaker on a duration_s timeline so the realized
// overlap ratio matches the request, synthesizes each source in place and
// sums them per the anechoic mixture model. min-mode analog: every source
// timeline spans the full mixture, so the mixture length equals the
// shortest source timeline by construction.
inline MixtureSample mix(const std::vector<SourceSpec>& specs, double overlap_ratio,
                         std::optional<double> noise_snr_db, double duration_s,
                         uint64_t noise_seed = 1) {
  const int c_count = static_cast<int>(specs.size());
  if (c_count < 1) throw ValueError("mix: need at least one source spec");
  if (overlap_ratio < 0.0 || overlap_ratio > 1.0)
    throw ValueError("mix: overlap_ratio outside [0,1]");
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * kSampleRate));
  const int64_t min_turn = kSampleRate * 3 / 10;

  int64_t turn = n, v = 0;
  if (c_count > 1) {
    // Largest equal turn length whose chain placement fits the timeline;
    // within it, binary-search the pair overlap for the requested ratio.
    auto solve_v = [&](int64_t t) {
      int64_t lo = 0, hi = t;
      while (lo < hi) {
        const int64_t mid = (lo + hi) / 2;
        if (detail::chain_overlap(c_count, t, mid) < overlap_ratio) lo = mid + 1;
        else hi = mid;
      }
      return lo;
    };
    int64_t lo = min_turn, hi = n;
    while (lo < hi) {
      const int64_t mid = (lo + hi + 1) / 2;
      const int64_t vm = solve_v(mid);
      const int64_t span = static_cast<int64_t>(c_count - 1) * (mid - vm) + mid;
      if (span <= n) lo = mid;
      else hi = mid - 1;
    }
    turn = lo;
    v = solve_v(turn);
    const int64_t span = static_cast<int64_t>(c_count - 1) * (turn - v) + turn;
    if (turn < min_turn || span > n)
      throw ValueError("mix: cannot realize overlap " + std::to_string(overlap_ratio) + " for " +
                       std::to_string(c_count) + " speakers in " + std::to_string(duration_s) +
                       " s");
  }
  const int64_t span = static_cast<int64_t>(c_count - 1) * (turn - v) + turn;
  const int64_t offset0 = (n - span) / 2;

  MixtureSample out;
  out.speakers = c_count;
  out.overlap_requested = overlap_ratio;
  for (int c = 0; c < c_count; ++c) {
    SourceSpec spec = specs[static_cast<size_t>(c)];
    spec.segments = {{offset0 + c * (turn - v), turn}};
    auto src = synth_source(spec, duration_s);
    out.sources.push_back(std::move(src.wave));
    out.activities.push_back(std::move(src.activity));
  }
  out.overlap_realized = realized_overlap(out.activities);
  // overlap is vacuous for a single speaker (always 0)
  if (c_count > 1 && std::abs(out.overlap_realized - overlap_ratio) > 0.05)
    throw ValueError("mix: realized overlap " + std::to_string(out.overlap_realized) +
                     " misses request " + std::to_string(overlap_ratio));

  // x = sum_c y_c (.) s_c + n; sources are already zero outside y_c.
  out.mix.assign(static_cast<size_t>(n), 0.0f);
  for (int c = 0; c < c_count; ++c)
    for (int64_t i = 0; i < n; ++i)
      out.mix[static_cast<size_t>(i)] += out.sources[static_cast<size_t>(c)][static_cast<size_t>(i)];

  if (noise_snr_db.has_value()) {
    double speech_power = 0.0;
    int64_t speech_count = 0;
    for (int64_t i = 0; i < n; ++i) {
      int active = 0;
      for (const auto& a : out.activities) active += a[static_cast<size_t>(i)];
      if (active >= 1) {
        speech_power += static_cast<double>(out.mix[static_cast<size_t>(i)]) *
                        out.mix[static_cast<size_t>(i)];
        ++speech_count;
      }
    }
    speech_power = speech_count ? speech_power / static_cast<double>(speech_count) : 0.0;
    const double noise_power = speech_power / std::pow(10.0, *noise_snr_db / 10.0);
    Rng rng(noise_seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power));
    out.noise.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      out.noise[static_cast<size_t>(i)] = static_cast<float>(gauss(rng));
      out.mix[static_cast<size_t>(i)] += out.noise[static_cast<size_t>(i)];
    }
  }

  out.frame_count = label_frames_for(n);
  out.frame_labels = activity_to_frame_labels(out.activities, out.frame_count);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus generation.
// ---------------------------------------------------------------------------

struct CorpusConfig {
  std::string out_dir;
  uint64_t seed = 7;
  double duration_s = 2.0;
  std::vector<int> speaker_counts = {2};
  std::vector<double> overlap_ratios = {1.0};
  // mixtures per (speaker count x overlap ratio) bin and split
  int train_per_bin = 90;
  int dev_per_bin = 10;
  int test_per_bin = 10;
  std::optional<double> noise_snr_db;
};

struct ManifestEntry {
  std::string id;
  std::string split;  // train / dev / test
  int speakers = 0;
  double overlap_requested = 0.0;
  double overlap_realized = 0.0;
  double duration_s = 0.0;
  uint64_t seed = 0;
  std::string mix_path;
  std::vector<std::string> source_paths;
  std::string rttm_path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == name) out.push_back(&e);
    return out;
  }
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : m.entries)
    rows.push_back({{"id", e.id},
                    {"split", e.split},
                    {"speakers", e.speakers},
                    {"overlap_requested", e.overlap_requested},
                    {"overlap_realized", e.overlap_realized},
                    {"duration_s", e.duration_s},
                    {"seed", e.seed},
                    {"mix_path", e.mix_path},
                    {"source_paths", e.source_paths},
                    {"rttm_path", e.rttm_path}});
  return {{"format", "eendss-manifest"}, {"entries", rows}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  for (const auto& r : j.at("entries")) {
    ManifestEntry e;
    e.id = r.at("id");
    e.split = r.at("split");
    e.speakers = r.at("speakers");
    e.overlap_requested = r.at("overlap_requested");
    e.overlap_realized = r.at("overlap_realized");
    e.duration_s = r.at("duration_s");
    e.seed = r.at("seed");
    e.mix_path = r.at("mix_path");
    e.source_paths = r.at("source_paths").get<std::vector<std::string>>();
    e.rttm_path = r.at("rttm_path");
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path);
  return manifest_from_json(nlohmann::json::parse(f));
}

// Fundamental frequency grid; per-sample assignment keeps distinct speakers
// at least 20 Hz apart.
inline std::vector<double> assign_f0s(int speakers, Rng& rng) {
  static const double grid[] = {105.0, 132.0, 161.0, 192.0, 226.0, 264.0};
  std::vector<int> idx(std::size(grid));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> jitter(-3.0, 3.0);
  std::vector<double> f0s;
  for (int c = 0; c < speakers; ++c)
    f0s.push_back(grid[static_cast<size_t>(idx[static_cast<size_t>(c)])] + jitter(rng));
  return f0s;
}

// Formant-like band presets; speakers within one mixture get distinct
// presets so timbres differ, mirroring the distinct-fundamental rule.
inline std::vector<std::vector<double>> assign_band_sets(int speakers, Rng& rng) {
  static const std::vector<std::vector<double>> presets = {
      {550.0, 1650.0}, {750.0, 2100.0}, {950.0, 2550.0}, {650.0, 2900.0},
      {850.0, 1450.0}, {500.0, 3100.0}};
  std::vector<size_t> idx(presets.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<double>> out;
  for (int c = 0; c < speakers; ++c) out.push_back(presets[idx[static_cast<size_t>(c)]]);
  return out;
}

// Reproducible corpus: every sample derives its RNG stream from
// (corpus seed, global index), so generation order cannot change content.
inline Manifest build_corpus(const CorpusConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir + "/wav");
  fs::create_directories(cfg.out_dir + "/rttm");
  Manifest manifest;
  int64_t global_index = 0;
  const struct {
    const char* name;
    int count;
  } splits[] = {{"train", cfg.train_per_bin}, {"dev", cfg.dev_per_bin}, {"test", cfg.test_per_bin}};
  for (const auto& split : splits) {
    for (int c_count : cfg.speaker_counts) {
      for (double overlap : cfg.overlap_ratios) {
        for (int i = 0; i < split.count; ++i, ++global_index) {
          const uint64_t sample_seed = mix_seed(cfg.seed, static_cast<uint64_t>(global_index));
          Rng rng(sample_seed);
          auto f0s = assign_f0s(c_count, rng);
          std::vector<SourceSpec> specs;
          for (int c = 0; c < c_count; ++c) {
            SourceSpec s;
            s.f0 = f0s[static_cast<size_t>(c)];
            s.band_centers = assign_bands(rng);
            s.seed = mix_seed(sample_seed, static_cast<uint64_t>(c) + 1);
            specs.push_back(s);
          }
          auto sample = mix(specs, overlap, cfg.noise_snr_db, cfg.duration_s,
                            mix_seed(sample_seed, 0));

          char id[32];
          std::snprintf(id, sizeof(id), "utt%05lld",
                        static_cast<long long>(global_index));
          ManifestEntry e;
          e.id = id;
          e.split = split.name;
          e.speakers = c_count;
          e.overlap_requested = overlap;
          e.overlap_realized = sample.overlap_realized;
          e.duration_s = cfg.duration_s;
          e.seed = sample_seed;
          e.mix_path = cfg.out_dir + "/wav/" + e.id + "_mix.wav";
          write_wav(e.mix_path, sample.mix);
          for (int c = 0; c < c_count; ++c) {
            e.source_paths.push_back(cfg.out_dir + "/wav/" + e.id + "_s" +
                                     std::to_string(c + 1) + ".wav");
            write_wav(e.source_paths.back(), sample.sources[static_cast<size_t>(c)]);
          }
          e.rttm_path = cfg.out_dir + "/rttm/" + e.id + ".rttm";
          write_rttm(e.rttm_path,
                     labels_to_segments(sample.frame_labels, c_count, sample.frame_count,
                                        static_cast<double>(kLabelHop) / kSampleRate, e.id));
          manifest.entries.push_back(std::move(e));
        }
      }
    }
  }
  std::ofstream mf(cfg.out_dir + "/manifest.json");
  if (!mf) throw IoError("cannot write manifest in " + cfg.out_dir);
  mf << manifest_to_json(manifest).dump(2) << "\n";
  return manifest;
}

}  // namespace eendss

#endif  // EENDSS_SIMULATE_HPP_
