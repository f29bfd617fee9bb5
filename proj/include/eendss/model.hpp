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
// The joint model: shared encoder/TCN bottleneck feeding both the
// separation branch (multiple 1x1 mask heads + shared decoder) and the
// diarization/counting branch (transformer + attractors).

#ifndef EENDSS_MODEL_HPP_
#define EENDSS_MODEL_HPP_

#include <map>
#include <string>
#include <vector>

#include "eendss/checkpoint.hpp"
#include "eendss/diarization.hpp"
#include "eendss/separation.hpp"

namespace eendss {

struct ModelConfig {
  int64_t enc_dim = 512;         // N
  int64_t bottleneck_dim = 128;  // B
  int64_t hidden_dim = 512;      // TCN block channels
  int64_t kernel = 16;
  int64_t stride = 8;
  int64_t tcn_layers = 8;
  int64_t tcn_repeats = 3;
  int64_t tcn_kernel = 3;
  int64_t attractor_dim = 256;  // D
  int64_t tf_layers = 4;
  int64_t tf_heads = 4;
  int64_t tf_ff = 1024;
  int64_t c_max = 4;
  int64_t subsample_factor = 8;
  bool lmf_concat = false;
  int64_t n_mels = 80;
  int64_t stft_frame = 512;
  int64_t stft_hop = 64;

  SeparationConfig separation() const {
    return {enc_dim, bottleneck_dim, hidden_dim, kernel,     stride,
            tcn_layers, tcn_repeats,   tcn_kernel, c_max};
  }
  DiarizationConfig diarization() const {
    return {bottleneck_dim, attractor_dim, tf_layers, tf_heads,
            tf_ff,          subsample_factor, lmf_concat, n_mels};
  }

  nlohmann::json to_json() const {
    return {{"enc_dim", enc_dim},
            {"bottleneck_dim", bottleneck_dim},
            {"hidden_dim", hidden_dim},
            {"kernel", kernel},
            {"stride", stride},
            {"tcn_layers", tcn_layers},
            {"tcn_repeats", tcn_repeats},
            {"tcn_kernel", tcn_kernel},
            {"attractor_dim", attractor_dim},
            {"tf_layers", tf_layers},
            {"tf_heads", tf_heads},
            {"tf_ff", tf_ff},
            {"c_max", c_max},
            {"subsample_factor", subsample_factor},
            {"lmf_concat", lmf_concat},
            {"n_mels", n_mels},
            {"stft_frame", stft_frame},
            {"stft_hop", stft_hop}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.enc_dim = j.at("enc_dim");
    c.bottleneck_dim = j.at("bottleneck_dim");
    c.hidden_dim = j.at("hidden_dim");
    c.kernel = j.at("kernel");
    c.stride = j.at("stride");
    c.tcn_layers = j.at("tcn_layers");
    c.tcn_repeats = j.at("tcn_repeats");
    c.tcn_kernel = j.at("tcn_kernel");
    c.attractor_dim = j.at("attractor_dim");
    c.tf_layers = j.at("tf_layers");
    c.tf_heads = j.at("tf_heads");
    c.tf_ff = j.at("tf_ff");
    c.c_max = j.at("c_max");
    c.subsample_factor = j.at("subsample_factor");
    c.lmf_concat = j.at("lmf_concat");
    c.n_mels = j.at("n_mels");
    c.stft_frame = j.at("stft_frame");
    c.stft_hop = j.at("stft_hop");
    return c;
  }
};

class EendSS {
 public:
  EendSS() = default;
  EendSS(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
    Rng rng(seed);
    sep = SeparationNet(cfg.separation(), rng);
    diar = DiarizationNet(cfg.diarization(), rng);
  }

  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  int64_t encoder_frames(int64_t samples) const {
    return conv_num_frames(samples, cfg_.kernel, cfg_.stride);
  }
  int64_t diar_frames(int64_t samples) const {
    return subsampled_num_frames(encoder_frames(samples), cfg_.subsample_factor);
  }
  // Diarization frame hop in samples (stride * subsample factor).
  int64_t diar_hop() const { return cfg_.stride * cfg_.subsample_factor; }

  static Tensor wave_tensor(const Waveform& x) {
    return Tensor::from_vec({1, static_cast<int64_t>(x.size())},
                            std::vector<float>(x.begin(), x.end()));
  }

  // Aligned LMF features as a constant (T_d, n_mels) tensor.
  Tensor lmf_tensor(const Waveform& x) const {
    const int64_t t_d = diar_frames(static_cast<int64_t>(x.size()));
    auto lmf = lmf_for_diar(x, cfg_.stft_frame, cfg_.stft_hop, cfg_.n_mels, t_d);
    return Tensor::from_vec({lmf.num_frames, lmf.dim}, std::move(lmf.values));
  }

  NamedParams named_params() {
    NamedParams out;
    sep.collect("sep", &out);
    diar.collect("diar", &out);
    return out;
  }

  std::vector<Tensor> parameters() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  void save(const std::string& path, const nlohmann::json& extra = {}) {
    nlohmann::json header;
    header["format"] = "eendss-model";
    header["model"] = cfg_.to_json();
    header["seed"] = seed_;
    if (!extra.is_null()) header["extra"] = extra;
    save_checkpoint(path, header, named_params());
  }

  static EendSS load(const std::string& path) {
    auto ck = load_checkpoint(path);
    if (!ck.header.contains("model")) throw IoError("checkpoint lacks a model header: " + path);
    EendSS model(ModelConfig::from_json(ck.header.at("model")),
                 ck.header.value("seed", uint64_t{0}));
    std::map<std::string, Tensor> by_name(ck.entries.begin(), ck.entries.end());
    for (auto& [name, t] : model.named_params()) {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw IoError("checkpoint missing parameter " + name);
      if (it->second.shape() != t.shape())
        throw IoError("checkpoint parameter " + name + " has shape " +
                      shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
      t.value() = it->second.value();
    }
    return model;
  }

  SeparationNet sep;
  DiarizationNet diar;

 private:
  ModelConfig cfg_;
  uint64_t seed_ = 0;
};

}  // namespace eendss

#endif  // EENDSS_MODEL_HPP_
