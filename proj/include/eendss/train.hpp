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
// Multitask training loop. Batches group samples of equal speaker count
// and length; gradients accumulate on a single tape per mini-batch (sum of
// per-sample losses). Training uses the oracle speaker count's mask head.
// The schedule halves the LR after 3 epochs without dev improvement and
// stops after 5, keeping the best-dev parameters.

#ifndef EENDSS_TRAIN_HPP_
#define EENDSS_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "eendss/inference.hpp"
#include "eendss/losses.hpp"
#include "eendss/model.hpp"
#include "eendss/optim.hpp"
#include "eendss/rttm.hpp"
#include "eendss/simulate.hpp"
#include "eendss/wavio.hpp"

namespace eendss {

struct TrainConfig {
  int batch_size = 16;
  float lr = 1e-3f;
  int lr_halving_patience = 3;
  int early_stop_patience = 5;
  LossWeights weights;
  uint64_t seed = 17;
  int max_epochs = 60;
  double grad_clip_norm = 5.0;
  double improvement_tol = 1e-4;  // dev loss must beat best by this much
  double max_skipped_batch_frac = 0.01;
};

struct TrainSample {
  std::string id;
  Waveform mix;
  std::vector<std::vector<float>> sources;
  std::vector<uint8_t> labels;  // speakers x frames
  int speakers = 0;
  int64_t frames = 0;
  Tensor lmf;  // cached aligned LMF (when the model concatenates it)
};

// Loads a manifest split into memory; labels come from the reference RTTM
// rasterized onto the diarization frame grid.
inline std::vector<TrainSample> load_split(const Manifest& manifest, const std::string& split,
                                           const EendSS& model) {
  std::vector<TrainSample> out;
  for (const auto* e : manifest.split(split)) {
    TrainSample s;
    s.id = e->id;
    s.mix = read_wav(e->mix_path);
    for (const auto& p : e->source_paths) s.sources.push_back(read_wav(p));
    s.speakers = e->speakers;
    s.frames = model.diar_frames(static_cast<int64_t>(s.mix.size()));
    int64_t rttm_speakers = 0;
    s.labels = segments_to_labels(read_rttm(e->rttm_path), s.frames,
                                  static_cast<double>(model.diar_hop()) / kSampleRate,
                                  &rttm_speakers);
    if (rttm_speakers != s.speakers)
      throw IoError(e->id + ": RTTM has " + std::to_string(rttm_speakers) +
                    " speakers, manifest says " + std::to_string(s.speakers));
    if (model.config().lmf_concat) s.lmf = model.lmf_tensor(s.mix);
    out.push_back(std::move(s));
  }
  return out;
}

struct EpochStats {
  double l_sisdr = 0.0;
  double l_diar = 0.0;
  double l_exist = 0.0;
  double total = 0.0;
  int64_t batches = 0;
  int64_t skipped = 0;
};

struct HistoryRow {
  int epoch = 0;
  float lr = 0.0f;
  EpochStats train;
  double dev_total = 0.0;
};

// LR-halving / early-stop schedule: "no improvement" means failing to beat
// the best dev loss by at least `tol`. The halving counter resets after a
// halve; both counters reset on improvement.
class FitSchedule {
 public:
  FitSchedule(double tol, int halve_patience, int stop_patience)
      : tol_(tol), halve_patience_(halve_patience), stop_patience_(stop_patience) {}

  struct Decision {
    bool improved = false;
    bool halve_lr = false;
    bool stop = false;
  };

  Decision observe(double dev_loss) {
    ++epoch_;
    Decision d;
    if (dev_loss < best_ - tol_) {
      best_ = dev_loss;
      best_epoch_ = epoch_;
      halve_ctr_ = stop_ctr_ = 0;
      d.improved = true;
      return d;
    }
    ++halve_ctr_;
    ++stop_ctr_;
    if (halve_ctr_ >= halve_patience_) {
      d.halve_lr = true;
      halve_ctr_ = 0;
    }
    if (stop_ctr_ >= stop_patience_) d.stop = true;
    return d;
  }

  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  double tol_;
  int halve_patience_, stop_patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int halve_ctr_ = 0, stop_ctr_ = 0;
  int epoch_ = 0;
};

inline void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write history: " + path);
  f << "epoch,lr,l_sisdr,l_diar,l_exist,total,dev_total\n";
  char line[256];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%d,%.8f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch,
                  static_cast<double>(r.lr), r.train.l_sisdr, r.train.l_diar, r.train.l_exist,
                  r.train.total, r.dev_total);
    f << line;
  }
}

class Trainer {
 public:
  Trainer(EendSS& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg), opt_(model.parameters(), cfg.lr), rng_(cfg.seed) {}

  // Forward pass for one sample with the oracle-count mask head; the
  // lambda1 = 0 ablation skips the separation branch entirely (its loss
  // weight is zero, so its gradients would be identically zero).
  LossBreakdown forward_sample(const TrainSample& s) {
    auto xt = EendSS::wave_tensor(s.mix);
    auto h = model_.sep.encode(xt);
    auto e_tcn = model_.sep.separate_features(h);

    auto emb = model_.diar.embed(e_tcn, s.lmf);
    auto att = model_.diar.generate_attractors(emb, s.speakers + 1);
    auto l_exist = existence_loss(att.existence, s.speakers);
    auto p = model_.diar.posteriors(emb, slice(att.attractors, 0, 0, s.speakers));
    auto [l_diar, diar_perm] = pit_diar_loss(p, s.labels, s.speakers);

    Tensor l_sisdr;
    std::vector<int> sep_perm;
    if (cfg_.weights.lambda1 > 0.0f) {
      auto masks = model_.sep.masks(e_tcn, s.speakers);
      auto est = model_.sep.apply_masks_and_decode(h, masks,
                                                   static_cast<int64_t>(s.mix.size()));
      auto [loss, perm] = pit_separation_loss(est, s.sources);
      l_sisdr = loss;
      sep_perm = perm;
    }
    auto breakdown = multitask_loss(l_sisdr, l_diar, l_exist, cfg_.weights);
    breakdown.diar_perm = diar_perm;
    breakdown.sep_perm = sep_perm;
    return breakdown;
  }

  EpochStats train_epoch(const std::vector<TrainSample>& samples) {
    auto batches = make_batches(samples);
    EpochStats stats;
    for (const auto& batch : batches) {
      opt_.zero_grad();
      Tensor batch_loss;
      EpochStats local;
      for (const auto* s : batch) {
        auto b = forward_sample(*s);
        batch_loss = batch_loss.defined() ? add(batch_loss, b.total) : b.total;
        local.l_sisdr += b.l_sisdr;
        local.l_diar += b.l_diar;
        local.l_exist += b.l_exist;
        local.total += b.total_value;
      }
      const auto bn = static_cast<float>(batch.size());
      batch_loss = scale(batch_loss, 1.0f / bn);
      ++stats.batches;
      if (!std::isfinite(batch_loss.item())) {
        ++stats.skipped;
        Tape::active().clear();
        continue;
      }
      Tape::active().backward(batch_loss);
      opt_.clip_grad_norm(cfg_.grad_clip_norm);
      if (!opt_.step()) ++stats.skipped;
      stats.l_sisdr += local.l_sisdr / bn;
      stats.l_diar += local.l_diar / bn;
      stats.l_exist += local.l_exist / bn;
      stats.total += local.total / bn;
    }
    if (stats.batches > 0) {
      const auto done = static_cast<double>(stats.batches - stats.skipped);
      if (done > 0) {
        stats.l_sisdr /= done;
        stats.l_diar /= done;
        stats.l_exist /= done;
        stats.total /= done;
      }
      if (static_cast<double>(stats.skipped) >
          cfg_.max_skipped_batch_frac * static_cast<double>(stats.batches))
        throw ValueError("training aborted: " + std::to_string(stats.skipped) + " of " +
                         std::to_string(stats.batches) + " batches skipped (non-finite)");
    }
    return stats;
  }

  EpochStats eval_split(const std::vector<TrainSample>& samples) {
    NoGrad guard;
    EpochStats stats;
    for (const auto& s : samples) {
      auto b = forward_sample(s);
      stats.l_sisdr += b.l_sisdr;
      stats.l_diar += b.l_diar;
      stats.l_exist += b.l_exist;
      stats.total += b.total_value;
    }
    const auto n = static_cast<double>(samples.size());
    if (n > 0) {
      stats.l_sisdr /= n;
      stats.l_diar /= n;
      stats.l_exist /= n;
      stats.total /= n;
    }
    return stats;
  }

  // Full schedule; on return the model holds the best-dev parameters.
  std::vector<HistoryRow> fit(const std::vector<TrainSample>& train,
                              const std::vector<TrainSample>& dev) {
    if (cfg_.max_epochs > 0 && dev.empty()) throw ValueError("fit: dev split is empty");
    std::vector<HistoryRow> history;
    FitSchedule schedule(cfg_.improvement_tol, cfg_.lr_halving_patience,
                         cfg_.early_stop_patience);
    std::vector<std::vector<float>> best_params = snapshot();
    for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
      HistoryRow row;
      row.epoch = epoch;
      row.lr = opt_.lr();
      row.train = train_epoch(train);
      row.dev_total = eval_split(dev).total;
      history.push_back(row);
      const auto d = schedule.observe(row.dev_total);
      if (d.improved) best_params = snapshot();
      if (d.halve_lr) opt_.set_lr(opt_.lr() * 0.5f);
      if (d.stop) break;
    }
    restore(best_params);
    best_epoch_ = schedule.best_epoch();
    return history;
  }

  int best_epoch() const { return best_epoch_; }
  Adam& optimizer() { return opt_; }

 private:
  std::vector<std::vector<float>> snapshot() {
    std::vector<std::vector<float>> out;
    for (auto& p : opt_.params()) out.push_back(p.value());
    return out;
  }
  void restore(const std::vector<std::vector<float>>& snap) {
    auto& params = opt_.params();
    for (size_t i = 0; i < params.size(); ++i) params[i].value() = snap[i];
  }

  // Groups samples of equal speaker count and length, shuffles within each
  // group and the batch order itself (seeded), keeping runs reproducible.
  std::vector<std::vector<const TrainSample*>> make_batches(
      const std::vector<TrainSample>& samples) {
    std::map<std::pair<int, size_t>, std::vector<const TrainSample*>> groups;
    for (const auto& s : samples) groups[{s.speakers, s.mix.size()}].push_back(&s);
    std::vector<std::vector<const TrainSample*>> batches;
    for (auto& [key, group] : groups) {
      std::shuffle(group.begin(), group.end(), rng_);
      for (size_t i = 0; i < group.size(); i += static_cast<size_t>(cfg_.batch_size)) {
        const size_t end = std::min(group.size(), i + static_cast<size_t>(cfg_.batch_size));
        batches.emplace_back(group.begin() + static_cast<int64_t>(i),
                             group.begin() + static_cast<int64_t>(end));
      }
    }
    std::shuffle(batches.begin(), batches.end(), rng_);
    return batches;
  }

  EendSS& model_;
  TrainConfig cfg_;
  Adam opt_;
  Rng rng_;
  int best_epoch_ = 0;
};

// Continues training from a fixed-count checkpoint on a mixed-count corpus
// (optimizer state and LR schedule start fresh). Every mask head whose
// count appears in the corpus receives gradient updates.
inline std::vector<HistoryRow> finetune_flexible(EendSS& model,
                                                 const std::vector<TrainSample>& train,
                                                 const std::vector<TrainSample>& dev,
                                                 const TrainConfig& cfg) {
  for (const auto& s : train)
    if (s.speakers > model.config().c_max)
      throw ValueError("finetune: corpus contains " + std::to_string(s.speakers) +
                       " speakers, model caps at " + std::to_string(model.config().c_max));
  if (cfg.max_epochs == 0) return {};
  Trainer trainer(model, cfg);
  return trainer.fit(train, dev);
}

}  // namespace eendss

#endif  // EENDSS_TRAIN_HPP_
