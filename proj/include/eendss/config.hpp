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
// Declarative run configuration. Parsing fails fast on unknown keys;
// every default matches the reference system configuration (N=512, B=128,
// D=256, kernel 16 / stride 8, 8x3 TCN, 4x4 transformer, Adam 1e-3,
// batch 16, patience 3/5, lambdas 1.0/0.2/0.2, theta = tau = 0.5).

#ifndef EENDSS_CONFIG_HPP_
#define EENDSS_CONFIG_HPP_

#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "eendss/inference.hpp"
#include "eendss/model.hpp"
#include "eendss/simulate.hpp"
#include "eendss/train.hpp"

namespace eendss {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  InferenceOptions thresholds;
  CorpusConfig simulate;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["model"] = model.to_json();
    j["train"] = {{"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"lr_halving_patience", train.lr_halving_patience},
                  {"early_stop_patience", train.early_stop_patience},
                  {"lambda1", train.weights.lambda1},
                  {"lambda2", train.weights.lambda2},
                  {"lambda3", train.weights.lambda3},
                  {"seed", train.seed},
                  {"max_epochs", train.max_epochs},
                  {"grad_clip_norm", train.grad_clip_norm},
                  {"improvement_tol", train.improvement_tol}};
    j["thresholds"] = {{"theta", thresholds.theta},
                       {"tau", thresholds.tau},
                       {"median_frames", thresholds.median_frames}};
    j["simulate"] = {{"seed", simulate.seed},
                     {"duration_s", simulate.duration_s},
                     {"speaker_counts", simulate.speaker_counts},
                     {"overlap_ratios", simulate.overlap_ratios},
                     {"train_per_bin", simulate.train_per_bin},
                     {"dev_per_bin", simulate.dev_per_bin},
                     {"test_per_bin", simulate.test_per_bin}};
    if (simulate.noise_snr_db.has_value())
      j["simulate"]["noise_snr_db"] = *simulate.noise_snr_db;
    else
      j["simulate"]["noise_snr_db"] = nullptr;
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig cfg;
    check_keys(j, {"model", "train", "thresholds", "simulate"}, "");
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m,
                 {"enc_dim", "bottleneck_dim", "hidden_dim", "kernel", "stride", "tcn_layers",
                  "tcn_repeats", "tcn_kernel", "attractor_dim", "tf_layers", "tf_heads", "tf_ff",
                  "c_max", "subsample_factor", "lmf_concat", "n_mels", "stft_frame", "stft_hop"},
                 "model.");
      get(m, "enc_dim", &cfg.model.enc_dim);
      get(m, "bottleneck_dim", &cfg.model.bottleneck_dim);
      get(m, "hidden_dim", &cfg.model.hidden_dim);
      get(m, "kernel", &cfg.model.kernel);
      get(m, "stride", &cfg.model.stride);
      get(m, "tcn_layers", &cfg.model.tcn_layers);
      get(m, "tcn_repeats", &cfg.model.tcn_repeats);
      get(m, "tcn_kernel", &cfg.model.tcn_kernel);
      get(m, "attractor_dim", &cfg.model.attractor_dim);
      get(m, "tf_layers", &cfg.model.tf_layers);
      get(m, "tf_heads", &cfg.model.tf_heads);
      get(m, "tf_ff", &cfg.model.tf_ff);
      get(m, "c_max", &cfg.model.c_max);
      get(m, "subsample_factor", &cfg.model.subsample_factor);
      get(m, "lmf_concat", &cfg.model.lmf_concat);
      get(m, "n_mels", &cfg.model.n_mels);
      get(m, "stft_frame", &cfg.model.stft_frame);
      get(m, "stft_hop", &cfg.model.stft_hop);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t,
                 {"batch_size", "lr", "lr_halving_patience", "early_stop_patience", "lambda1",
                  "lambda2", "lambda3", "seed", "max_epochs", "grad_clip_norm",
                  "improvement_tol"},
                 "train.");
      get(t, "batch_size", &cfg.train.batch_size);
      get(t, "lr", &cfg.train.lr);
      get(t, "lr_halving_patience", &cfg.train.lr_halving_patience);
      get(t, "early_stop_patience", &cfg.train.early_stop_patience);
      get(t, "lambda1", &cfg.train.weights.lambda1);
      get(t, "lambda2", &cfg.train.weights.lambda2);
      get(t, "lambda3", &cfg.train.weights.lambda3);
      get(t, "seed", &cfg.train.seed);
      get(t, "max_epochs", &cfg.train.max_epochs);
      get(t, "grad_clip_norm", &cfg.train.grad_clip_norm);
      get(t, "improvement_tol", &cfg.train.improvement_tol);
      if (cfg.train.lr_halving_patience <= 0 || cfg.train.early_stop_patience <= 0)
        throw ValueError("config: patiences must be positive");
      if (cfg.train.weights.lambda1 < 0 || cfg.train.weights.lambda2 < 0 ||
          cfg.train.weights.lambda3 < 0)
        throw ValueError("config: loss weights must be non-negative");
    }
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      check_keys(t, {"theta", "tau", "median_frames"}, "thresholds.");
      get(t, "theta", &cfg.thresholds.theta);
      get(t, "tau", &cfg.thresholds.tau);
      get(t, "median_frames", &cfg.thresholds.median_frames);
    }
    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      check_keys(s,
                 {"seed", "duration_s", "speaker_counts", "overlap_ratios", "train_per_bin",
                  "dev_per_bin", "test_per_bin", "noise_snr_db"},
                 "simulate.");
      get(s, "seed", &cfg.simulate.seed);
      get(s, "duration_s", &cfg.simulate.duration_s);
      if (s.contains("speaker_counts"))
        cfg.simulate.speaker_counts = s.at("speaker_counts").get<std::vector<int>>();
      if (s.contains("overlap_ratios"))
        cfg.simulate.overlap_ratios = s.at("overlap_ratios").get<std::vector<double>>();
      get(s, "train_per_bin", &cfg.simulate.train_per_bin);
      get(s, "dev_per_bin", &cfg.simulate.dev_per_bin);
      get(s, "test_per_bin", &cfg.simulate.test_per_bin);
      if (s.contains("noise_snr_db") && !s.at("noise_snr_db").is_null())
        cfg.simulate.noise_snr_db = s.at("noise_snr_db").get<double>();
      for (int c : cfg.simulate.speaker_counts)
        if (c < 1 || c > cfg.model.c_max)
          throw ValueError("config: simulate.speaker_counts entry " + std::to_string(c) +
                           " outside [1, c_max]");
      for (double o : cfg.simulate.overlap_ratios)
        if (o < 0.0 || o > 1.0)
          throw ValueError("config: simulate.overlap_ratios entry " + std::to_string(o) +
                           " outside [0, 1]");
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    return from_json(nlohmann::json::parse(f));
  }

  // Fully-resolved config echo, written next to each run's outputs.
  void echo(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write config echo: " + path);
    f << to_json().dump(2) << "\n";
  }

 private:
  static void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& prefix) {
    if (!j.is_object()) throw ValueError("config: expected an object at '" + prefix + "'");
    for (const auto& [key, value] : j.items())
      if (!allowed.count(key)) throw ValueError("config: unknown key '" + prefix + key + "'");
  }
  template <class T>
  static void get(const nlohmann::json& j, const char* key, T* out) {
    if (j.contains(key)) *out = j.at(key).get<T>();
  }
};

}  // namespace eendss

#endif  // EENDSS_CONFIG_HPP_
