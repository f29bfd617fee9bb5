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
// Command-line surface: corpus simulation, training, 2-pass inference,
// evaluation and spectrogram emission. Every run echoes its fully-resolved
// configuration next to its outputs; reruns from the echoed config are
// identical.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eendss/eendss.hpp"

namespace fs = std::filesystem;
using namespace eendss;

namespace {

struct FlagOverrides {
  std::optional<uint64_t> seed;
  std::optional<float> lambda1, lambda2, lambda3;
  std::optional<float> theta, tau;
  std::optional<int64_t> c_max;
  bool lmf = false;
};

RunConfig resolve_config(const std::string& config_path, const FlagOverrides& f) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  if (f.seed) {
    cfg.train.seed = *f.seed;
    cfg.simulate.seed = *f.seed;
  }
  if (f.lambda1) cfg.train.weights.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.train.weights.lambda2 = *f.lambda2;
  if (f.lambda3) cfg.train.weights.lambda3 = *f.lambda3;
  if (f.theta) cfg.thresholds.theta = *f.theta;
  if (f.tau) cfg.thresholds.tau = *f.tau;
  if (f.c_max) cfg.model.c_max = *f.c_max;
  if (f.lmf) cfg.model.lmf_concat = true;
  if (cfg.train.weights.lambda1 < 0 || cfg.train.weights.lambda2 < 0 ||
      cfg.train.weights.lambda3 < 0)
    throw ValueError("negative loss weights rejected (--lambda1/2/3)");
  return cfg;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const FlagOverrides& flags) {
  RunConfig cfg = resolve_config(config_path, flags);
  cfg.simulate.out_dir = out_dir;
  fs::create_directories(out_dir);
  cfg.echo(out_dir + "/config_echo.json");
  auto manifest = build_corpus(cfg.simulate);
  std::map<std::string, int> per_split;
  for (const auto& e : manifest.entries) ++per_split[e.split];
  std::printf("corpus written to %s: %zu mixtures", out_dir.c_str(), manifest.entries.size());
  for (const auto& [split, n] : per_split) std::printf(", %s=%d", split.c_str(), n);
  std::printf("\n");
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir, const std::string& finetune_from,
              const FlagOverrides& flags) {
  RunConfig cfg = resolve_config(config_path, flags);
  if (corpus_dir.empty() || !fs::exists(corpus_dir + "/manifest.json"))
    throw ValueError("corpus path missing or lacks manifest.json: '" + corpus_dir + "'");
  fs::create_directories(out_dir);
  auto manifest = load_manifest(corpus_dir + "/manifest.json");

  EendSS model = finetune_from.empty() ? EendSS(cfg.model, cfg.train.seed)
                                       : EendSS::load(finetune_from);
  if (!finetune_from.empty() && flags.lmf && !model.config().lmf_concat)
    throw ValueError("--lmf conflicts with the checkpoint (trained without LMF concat)");
  cfg.model = model.config();
  cfg.echo(out_dir + "/config_echo.json");

  auto train_set = load_split(manifest, "train", model);
  auto dev_set = load_split(manifest, "dev", model);
  std::printf("training on %zu mixtures (dev %zu), lambda=(%g,%g,%g)%s\n", train_set.size(),
              dev_set.size(), static_cast<double>(cfg.train.weights.lambda1),
              static_cast<double>(cfg.train.weights.lambda2),
              static_cast<double>(cfg.train.weights.lambda3),
              finetune_from.empty() ? "" : " [finetune]");

  std::vector<HistoryRow> history;
  if (finetune_from.empty()) {
    Trainer trainer(model, cfg.train);
    history = trainer.fit(train_set, dev_set);
  } else {
    history = finetune_flexible(model, train_set, dev_set, cfg.train);
  }
  write_history_csv(out_dir + "/history.csv", history);
  model.save(out_dir + "/model.ckpt", {{"train_seed", cfg.train.seed}});
  for (const auto& r : history)
    std::printf("epoch %d: lr %.2e train %.4f dev %.4f\n", r.epoch,
                static_cast<double>(r.lr), r.train.total, r.dev_total);
  std::printf("checkpoint: %s/model.ckpt\n", out_dir.c_str());
  return 0;
}

void infer_one(EendSS& model, const InferenceOptions& opts, const Waveform& x,
               const std::string& id, const std::string& out_dir) {
  auto res = infer(model, x, opts);
  const auto& waves = (opts.fusion && !res.fused.empty()) ? res.fused : res.separated;
  for (size_t c = 0; c < waves.size(); ++c)
    write_wav(out_dir + "/" + id + "_spk" + std::to_string(c + 1) + ".wav", waves[c]);
  const double frame_s = static_cast<double>(model.diar_hop()) / kSampleRate;
  write_rttm(out_dir + "/" + id + ".rttm",
             labels_to_segments(res.diar.labels, res.diar.num_speakers, res.diar.num_frames,
                                frame_s, id));
  nlohmann::json meta = {{"id", id},
                         {"estimated_count", res.estimated_count},
                         {"existence", res.existence},
                         {"alignment", res.alignment},
                         {"fusion", opts.fusion},
                         {"num_frames", res.diar.num_frames},
                         {"warning", res.warning}};
  std::ofstream mf(out_dir + "/" + id + ".json");
  mf << meta.dump(2) << "\n";
}

int cmd_infer(const std::string& config_path, const std::string& ckpt_path,
              const std::string& wav_in, const std::string& manifest_path,
              const std::string& split, const std::string& out_dir, bool fusion,
              const FlagOverrides& flags) {
  RunConfig cfg = resolve_config(config_path, flags);
  cfg.thresholds.fusion = fusion;
  EendSS model = EendSS::load(ckpt_path);
  cfg.model = model.config();
  fs::create_directories(out_dir);
  cfg.echo(out_dir + "/config_echo.json");
  InferenceOptions opts = cfg.thresholds;
  opts.fusion = fusion;
  if (flags.lmf && !model.config().lmf_concat)
    throw ValueError("--lmf conflicts with the checkpoint (trained without LMF concat)");

  if (!wav_in.empty()) {
    auto x = read_wav(wav_in);
    infer_one(model, opts, x, fs::path(wav_in).stem().string(), out_dir);
    std::printf("wrote inference outputs for %s to %s\n", wav_in.c_str(), out_dir.c_str());
    return 0;
  }
  if (manifest_path.empty())
    throw ValueError("either a WAV path or --manifest must be given");
  auto manifest = load_manifest(manifest_path);
  auto entries = manifest.split(split);
  if (entries.empty()) throw ValueError("manifest split '" + split + "' is empty");
  for (const auto* e : entries) infer_one(model, opts, read_wav(e->mix_path), e->id, out_dir);
  std::printf("wrote inference outputs for %zu mixtures to %s\n", entries.size(),
              out_dir.c_str());
  return 0;
}

struct UttScore {
  std::string id;
  int speakers = 0;
  int estimated = 0;
  double overlap = 0.0;
  DerBreakdown der_score;
  SeparationScores sep;
};

UttScore eval_one(const ManifestEntry& e, const std::string& hyp_dir,
                  const InferenceOptions& opts) {
  UttScore u;
  u.id = e.id;
  u.speakers = e.speakers;
  u.overlap = e.overlap_requested;

  auto mix = read_wav(e.mix_path);
  const int64_t frames = label_frames_for(static_cast<int64_t>(mix.size()));
  const double frame_s = static_cast<double>(kLabelHop) / kSampleRate;
  int64_t ref_speakers = 0;
  auto ref_labels = segments_to_labels(read_rttm(e.rttm_path), frames, frame_s, &ref_speakers);

  std::vector<std::vector<float>> refs;
  for (const auto& p : e.source_paths) refs.push_back(read_wav(p));

  // Hypothesis artifacts, as written by `infer`.
  const std::string hyp_rttm = hyp_dir + "/" + e.id + ".rttm";
  std::vector<uint8_t> hyp_labels;
  int64_t hyp_speakers = 0;
  if (fs::exists(hyp_rttm))
    hyp_labels = segments_to_labels(read_rttm(hyp_rttm), frames, frame_s, &hyp_speakers);
  std::vector<std::vector<float>> ests;
  for (int c = 1;; ++c) {
    const std::string p = hyp_dir + "/" + e.id + "_spk" + std::to_string(c) + ".wav";
    if (!fs::exists(p)) break;
    ests.push_back(read_wav(p));
  }
  u.estimated = static_cast<int>(ests.size());

  u.der_score = der(ref_labels, ref_speakers, hyp_labels, hyp_speakers, frames, 0.0,
                    opts.median_frames, frame_s);
  u.sep = score_separation(ests, refs, mix);
  return u;
}

int cmd_eval(const std::string& config_path, const std::string& manifest_path,
             const std::string& hyp_dir, const std::string& out_dir, const std::string& split,
             const FlagOverrides& flags) {
  RunConfig cfg = resolve_config(config_path, flags);
  auto manifest = load_manifest(manifest_path);
  auto entries = manifest.split(split);
  if (entries.empty()) throw ValueError("manifest split '" + split + "' is empty");
  fs::create_directories(out_dir);
  cfg.echo(out_dir + "/config_echo.json");

  // Embarrassingly parallel across utterances; results collected by index.
  std::vector<UttScore> scores(entries.size());
  const size_t workers = std::min<size_t>(std::thread::hardware_concurrency(), 8);
  std::vector<std::future<void>> futs;
  std::atomic<size_t> next{0};
  for (size_t w = 0; w < std::max<size_t>(workers, 1); ++w)
    futs.push_back(std::async(std::launch::async, [&]() {
      for (size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1))
        scores[i] = eval_one(*entries[i], hyp_dir, cfg.thresholds);
    }));
  for (auto& f : futs) f.get();

  std::ofstream csv(out_dir + "/report.csv");
  csv << "id,speakers,estimated,overlap,der,miss,fa,confusion,si_sdri,sdri,stoi\n";
  char line[512];
  double si_sum = 0, sdr_sum = 0, stoi_sum = 0;
  int64_t der_err_frames = 0, der_ref_frames = 0;
  std::vector<std::pair<int, int>> count_pairs;
  std::map<double, std::vector<const UttScore*>> by_overlap;
  for (const auto& u : scores) {
    std::snprintf(line, sizeof(line), "%s,%d,%d,%.2f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                  u.id.c_str(), u.speakers, u.estimated, u.overlap,
                  u.der_score.defined ? u.der_score.der_pct : -1.0, u.der_score.miss_pct,
                  u.der_score.fa_pct, u.der_score.conf_pct, u.sep.si_sdri, u.sep.sdri,
                  u.sep.stoi_score);
    csv << line;
    si_sum += u.sep.si_sdri;
    sdr_sum += u.sep.sdri;
    stoi_sum += u.sep.stoi_score;
    if (u.der_score.defined) {
      der_err_frames += static_cast<int64_t>(
          std::llround(u.der_score.der_pct / 100.0 *
                       static_cast<double>(u.der_score.ref_speech_frames)));
      der_ref_frames += u.der_score.ref_speech_frames;
    }
    count_pairs.emplace_back(u.speakers, u.estimated);
    by_overlap[u.overlap].push_back(&u);
  }
  const auto n = static_cast<double>(scores.size());
  const double pooled_der =
      der_ref_frames ? 100.0 * static_cast<double>(der_err_frames) /
                           static_cast<double>(der_ref_frames)
                     : -1.0;
  const double sca = speaker_counting_accuracy(count_pairs);
  std::snprintf(line, sizeof(line), "ALL,%d,%d,%.2f,%.4f,,,,%.4f,%.4f,%.4f\n", 0, 0, -1.0,
                pooled_der, si_sum / n, sdr_sum / n, stoi_sum / n);
  csv << line;
  csv.close();

  std::ofstream ov(out_dir + "/per_overlap.csv");
  ov << "overlap,count,der,si_sdri,sdri,stoi,sca\n";
  for (const auto& [overlap, us] : by_overlap) {
    double si = 0, sd = 0, st = 0;
    int64_t err = 0, tot = 0;
    std::vector<std::pair<int, int>> pairs;
    for (const auto* u : us) {
      si += u->sep.si_sdri;
      sd += u->sep.sdri;
      st += u->sep.stoi_score;
      if (u->der_score.defined) {
        err += static_cast<int64_t>(std::llround(
            u->der_score.der_pct / 100.0 * static_cast<double>(u->der_score.ref_speech_frames)));
        tot += u->der_score.ref_speech_frames;
      }
      pairs.emplace_back(u->speakers, u->estimated);
    }
    const auto m = static_cast<double>(us.size());
    std::snprintf(line, sizeof(line), "%.2f,%zu,%.4f,%.4f,%.4f,%.4f,%.2f\n", overlap, us.size(),
                  tot ? 100.0 * static_cast<double>(err) / static_cast<double>(tot) : -1.0,
                  si / m, sd / m, st / m, speaker_counting_accuracy(pairs));
    ov << line;
  }
  ov.close();

  nlohmann::json agg = {{"utterances", scores.size()},
                        {"der", pooled_der},
                        {"si_sdri", si_sum / n},
                        {"sdri", sdr_sum / n},
                        {"stoi", stoi_sum / n},
                        {"sca", sca}};
  std::ofstream jf(out_dir + "/report.json");
  jf << agg.dump(2) << "\n";
  std::printf("eval (%zu utts): DER %.2f%%  SI-SDRi %.2f dB  SDRi %.2f dB  STOI %.3f  SCA %.1f%%\n",
              scores.size(), pooled_der, si_sum / n, sdr_sum / n, stoi_sum / n, sca);
  return 0;
}

int cmd_spectrogram(const std::string& wav_in, const std::string& out_prefix, int64_t mel_bins,
                    const FlagOverrides& flags) {
  RunConfig cfg = resolve_config("", flags);
  auto x = read_wav(wav_in);
  auto power = stft_power(x, cfg.model.stft_frame, cfg.model.stft_hop);
  FrameSequence feat;
  if (mel_bins > 0) {
    feat = log_mel(power, mel_bins, kSampleRate);
  } else {
    feat = power;
    for (auto& v : feat.values)
      v = static_cast<float>(std::log(std::max(static_cast<double>(v), kLogMelFloor)));
  }
  // PNG: rows are bins (low frequency at the bottom), columns are frames.
  const int64_t bins = feat.dim, frames = feat.num_frames;
  float lo = feat.values[0], hi = feat.values[0];
  for (float v : feat.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi - lo;
  std::vector<uint8_t> img(static_cast<size_t>(bins * frames));
  for (int64_t b = 0; b < bins; ++b)
    for (int64_t t = 0; t < frames; ++t) {
      const float v = feat.values[static_cast<size_t>(t * bins + b)];
      const float norm = range > 0 ? (v - lo) / range : 0.0f;
      img[static_cast<size_t>((bins - 1 - b) * frames + t)] =
          static_cast<uint8_t>(std::lround(norm * 255.0f));
    }
  write_png_gray(out_prefix + ".png", img, frames, bins);
  std::ofstream csv(out_prefix + ".csv");
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t b = 0; b < bins; ++b)
      csv << (b ? "," : "") << feat.values[static_cast<size_t>(t * bins + b)];
    csv << "\n";
  }
  std::printf("wrote %s.png (%lld x %lld) and %s.csv\n", out_prefix.c_str(),
              static_cast<long long>(bins), static_cast<long long>(frames), out_prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint speech separation, diarization and speaker counting"};
  app.require_subcommand(1);

  std::string config_path, out_dir, corpus_dir, ckpt_path, wav_in, manifest_path;
  std::string finetune_from, split = "test", hyp_dir, out_prefix;
  bool fusion = false;
  int64_t mel_bins = 0;
  FlagOverrides flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", flags.seed, "override RNG seed");
    cmd->add_option("--lambda1", flags.lambda1, "SI-SDR loss weight");
    cmd->add_option("--lambda2", flags.lambda2, "diarization loss weight");
    cmd->add_option("--lambda3", flags.lambda3, "existence loss weight");
    cmd->add_option("--threshold-theta", flags.theta, "binarization threshold");
    cmd->add_option("--threshold-tau", flags.tau, "counting threshold");
    cmd->add_option("--c-max", flags.c_max, "maximum speaker count");
    cmd->add_flag("--lmf", flags.lmf, "concatenate log-mel features in the diarization branch");
  };

  auto* sim = app.add_subcommand("simulate", "generate a synthetic mixture corpus");
  add_common(sim);
  sim->add_option("--out", out_dir, "output corpus directory")->required();

  auto* train = app.add_subcommand("train", "train (or finetune) the joint model");
  add_common(train);
  train->add_option("--corpus", corpus_dir, "corpus directory with manifest.json")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_option("--finetune-from", finetune_from, "checkpoint to continue from");

  auto* inf = app.add_subcommand("infer", "2-pass inference on a WAV or manifest split");
  add_common(inf);
  inf->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  inf->add_option("wav", wav_in, "input mixture WAV");
  inf->add_option("--manifest", manifest_path, "batch mode: corpus manifest");
  inf->add_option("--split", split, "manifest split for batch mode (default test)");
  inf->add_option("--out", out_dir, "output directory")->required();
  inf->add_flag("--fusion", fusion, "multiply separated signals by aligned posteriors");

  auto* ev = app.add_subcommand("eval", "score hypothesis outputs against a reference corpus");
  add_common(ev);
  ev->add_option("--manifest", manifest_path, "reference manifest")->required();
  ev->add_option("--hyp", hyp_dir, "directory with inference outputs")->required();
  ev->add_option("--out", out_dir, "report directory")->required();
  ev->add_option("--split", split, "manifest split (default test)");

  auto* spect = app.add_subcommand("spectrogram", "grayscale PNG + CSV of log-power frames");
  add_common(spect);
  spect->add_option("wav", wav_in, "input WAV")->required();
  spect->add_option("--out", out_prefix, "output path prefix")->required();
  spect->add_option("--mel", mel_bins, "emit log-mel features with this many bands");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, flags);
    if (train->parsed())
      return cmd_train(config_path, corpus_dir, out_dir, finetune_from, flags);
    if (inf->parsed())
      return cmd_infer(config_path, ckpt_path, wav_in, manifest_path, split, out_dir, fusion,
                       flags);
    if (ev->parsed())
      return cmd_eval(config_path, manifest_path, hyp_dir, out_dir, split, flags);
    if (spect->parsed()) return cmd_spectrogram(wav_in, out_prefix, mel_bins, flags);
  } catch (const ValueError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
