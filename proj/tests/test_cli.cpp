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
// End-to-end checks of the installed CLI binary (path from EENDSS_BIN).

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "eendss/eendss.hpp"

using namespace eendss;
namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("EENDSS_BIN");
  if (!b) throw std::runtime_error("EENDSS_BIN not set");
  return b;
}

int run(const std::string& args, const std::string& log = "/tmp/eendss_cli_log.txt") {
  const std::string cmd = bin() + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream(path) << j.dump(2);
}

// Small model/corpus configuration shared by the CLI tests.
nlohmann::json tiny_config() {
  return {{"model",
           {{"enc_dim", 16},
            {"bottleneck_dim", 8},
            {"hidden_dim", 12},
            {"tcn_layers", 2},
            {"tcn_repeats", 1},
            {"attractor_dim", 16},
            {"tf_layers", 1},
            {"tf_heads", 2},
            {"tf_ff", 32}}},
          {"train", {{"batch_size", 4}, {"max_epochs", 2}, {"seed", 3}}},
          {"simulate",
           {{"seed", 9},
            {"duration_s", 1.0},
            {"speaker_counts", {2}},
            {"overlap_ratios", {0.6, 1.0}},
            {"train_per_bin", 4},
            {"dev_per_bin", 2},
            {"test_per_bin", 2}}}};
}

}  // namespace

TEST(Cli, SimulateProducesRequestedCorpusAndIsRerunnable) {
  fs::remove_all("/tmp/eendss_cli/corpus");
  fs::create_directories("/tmp/eendss_cli");
  write_json("/tmp/eendss_cli/config.json", tiny_config());
  ASSERT_EQ(run("simulate --config /tmp/eendss_cli/config.json --out /tmp/eendss_cli/corpus"), 0);
  auto manifest = load_manifest("/tmp/eendss_cli/corpus/manifest.json");
  EXPECT_EQ(manifest.entries.size(), static_cast<size_t>((4 + 2 + 2) * 2));
  fs::remove_all("/tmp/eendss_cli/corpus2");
  ASSERT_EQ(run("simulate --config /tmp/eendss_cli/config.json --out /tmp/eendss_cli/corpus2"), 0);
  auto m2 = load_manifest("/tmp/eendss_cli/corpus2/manifest.json");
  ASSERT_EQ(m2.entries.size(), manifest.entries.size());
  for (size_t i = 0; i < m2.entries.size(); ++i)
    EXPECT_EQ(read_file(m2.entries[i].mix_path), read_file(manifest.entries[i].mix_path));
}

TEST(Cli, InvalidOverlapListExitsTwoNamingField) {
  auto cfg = tiny_config();
  cfg["simulate"]["overlap_ratios"] = {0.5, 1.4};
  write_json("/tmp/eendss_cli/bad_config.json", cfg);
  const int rc = run(
      "simulate --config /tmp/eendss_cli/bad_config.json --out /tmp/eendss_cli/bad_corpus",
      "/tmp/eendss_cli/bad_log.txt");
  EXPECT_EQ(rc, 2);
  EXPECT_NE(read_file("/tmp/eendss_cli/bad_log.txt").find("overlap_ratios"), std::string::npos);
}

TEST(Cli, MissingCorpusExitsTwo) {
  write_json("/tmp/eendss_cli/config.json", tiny_config());
  EXPECT_EQ(run("train --config /tmp/eendss_cli/config.json --corpus /tmp/eendss_cli/nowhere "
                "--out /tmp/eendss_cli/run"),
            2);
}

TEST(Cli, TrainInferEvalPipeline) {
  write_json("/tmp/eendss_cli/config.json", tiny_config());
  fs::remove_all("/tmp/eendss_cli/corpus");
  ASSERT_EQ(run("simulate --config /tmp/eendss_cli/config.json --out /tmp/eendss_cli/corpus"), 0);
  fs::remove_all("/tmp/eendss_cli/run");
  ASSERT_EQ(run("train --config /tmp/eendss_cli/config.json --corpus /tmp/eendss_cli/corpus "
                "--out /tmp/eendss_cli/run"),
            0);
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/run/model.ckpt"));
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/run/history.csv"));
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/run/config_echo.json"));

  fs::remove_all("/tmp/eendss_cli/hyp");
  ASSERT_EQ(run("infer --config /tmp/eendss_cli/config.json --checkpoint "
                "/tmp/eendss_cli/run/model.ckpt --manifest /tmp/eendss_cli/corpus/manifest.json "
                "--split test --out /tmp/eendss_cli/hyp"),
            0);
  auto manifest = load_manifest("/tmp/eendss_cli/corpus/manifest.json");
  for (const auto* e : manifest.split("test")) {
    EXPECT_TRUE(fs::exists("/tmp/eendss_cli/hyp/" + e->id + ".rttm"));
    EXPECT_TRUE(fs::exists("/tmp/eendss_cli/hyp/" + e->id + ".json"));
    std::ifstream jf("/tmp/eendss_cli/hyp/" + e->id + ".json");
    auto meta = nlohmann::json::parse(jf);
    const int64_t c_hat = meta.at("estimated_count");
    for (int64_t c = 1; c <= c_hat; ++c)
      EXPECT_TRUE(
          fs::exists("/tmp/eendss_cli/hyp/" + e->id + "_spk" + std::to_string(c) + ".wav"));
    EXPECT_FALSE(fs::exists("/tmp/eendss_cli/hyp/" + e->id + "_spk" +
                            std::to_string(c_hat + 1) + ".wav"));
  }

  fs::remove_all("/tmp/eendss_cli/report");
  ASSERT_EQ(run("eval --manifest /tmp/eendss_cli/corpus/manifest.json --hyp /tmp/eendss_cli/hyp "
                "--out /tmp/eendss_cli/report --split test"),
            0);
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/report/report.csv"));
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/report/per_overlap.csv"));
  // one row per overlap bin present in the manifest (plus header)
  std::ifstream ov("/tmp/eendss_cli/report/per_overlap.csv");
  int lines = 0;
  std::string line;
  while (std::getline(ov, line)) ++lines;
  EXPECT_EQ(lines, 1 + 2);
}

TEST(Cli, FusionChangesWavsNotRttm) {
  // model with existence forced high so the estimated count is stable
  ModelConfig cfg;
  cfg.enc_dim = 16;
  cfg.bottleneck_dim = 8;
  cfg.hidden_dim = 12;
  cfg.tcn_layers = 2;
  cfg.tcn_repeats = 1;
  cfg.attractor_dim = 16;
  cfg.tf_layers = 1;
  cfg.tf_heads = 2;
  cfg.tf_ff = 32;
  EendSS model(cfg, 11);
  std::fill(model.diar.exist.w.value().begin(), model.diar.exist.w.value().end(), 0.0f);
  model.diar.exist.b.value()[0] = 4.0f;
  fs::create_directories("/tmp/eendss_cli");
  model.save("/tmp/eendss_cli/forced.ckpt");

  SourceSpec a, b;
  a.seed = 1;
  b.seed = 2;
  a.f0 = 132;
  b.f0 = 226;
  write_wav("/tmp/eendss_cli/mix.wav", mix({a, b}, 0.8, std::nullopt, 1.0).mix);

  fs::remove_all("/tmp/eendss_cli/inf_plain");
  fs::remove_all("/tmp/eendss_cli/inf_fused");
  ASSERT_EQ(run("infer --checkpoint /tmp/eendss_cli/forced.ckpt /tmp/eendss_cli/mix.wav "
                "--out /tmp/eendss_cli/inf_plain"),
            0);
  ASSERT_EQ(run("infer --checkpoint /tmp/eendss_cli/forced.ckpt /tmp/eendss_cli/mix.wav "
                "--out /tmp/eendss_cli/inf_fused --fusion"),
            0);
  EXPECT_EQ(read_file("/tmp/eendss_cli/inf_plain/mix.rttm"),
            read_file("/tmp/eendss_cli/inf_fused/mix.rttm"));
  EXPECT_NE(read_file("/tmp/eendss_cli/inf_plain/mix_spk1.wav"),
            read_file("/tmp/eendss_cli/inf_fused/mix_spk1.wav"));
}

TEST(Cli, HypRttmScoresZeroAgainstItself) {
  // round-trip: the RTTM written by infer, read back and scored against
  // itself, is a perfect hypothesis
  const std::string rttm = "/tmp/eendss_cli/inf_plain/mix.rttm";
  ASSERT_TRUE(fs::exists(rttm));
  auto segs = read_rttm(rttm);
  const int64_t frames = label_frames_for(8000);
  int64_t speakers = 0;
  auto labels = segments_to_labels(segs, frames, 0.008, &speakers);
  if (speakers > 0) {
    auto out = der(labels, speakers, labels, speakers, frames, 0.0, 1);
    EXPECT_DOUBLE_EQ(out.der_pct, 0.0);
  }
}

TEST(Cli, SpectrogramSilenceAndTone) {
  Waveform silence(8000, 0.0f);
  write_wav("/tmp/eendss_cli/silence.wav", silence);
  ASSERT_EQ(run("spectrogram /tmp/eendss_cli/silence.wav --out /tmp/eendss_cli/spec_silence"), 0);
  EXPECT_TRUE(fs::exists("/tmp/eendss_cli/spec_silence.png"));
  // uniform minimum-value image: every CSV entry is the log floor
  std::ifstream csv("/tmp/eendss_cli/spec_silence.csv");
  std::string cell, line;
  std::getline(csv, line);
  std::istringstream is(line);
  while (std::getline(is, cell, ','))
    EXPECT_NEAR(std::stod(cell), std::log(1e-10), 1e-3);

  // pure tone: single horizontal ridge at the expected bin
  const double freq = 1000.0;
  Waveform tone(8000);
  for (size_t i = 0; i < tone.size(); ++i)
    tone[i] = 0.5f * static_cast<float>(std::sin(2.0 * std::numbers::pi * freq * i / kSampleRate));
  write_wav("/tmp/eendss_cli/tone.wav", tone);
  ASSERT_EQ(run("spectrogram /tmp/eendss_cli/tone.wav --out /tmp/eendss_cli/spec_tone"), 0);
  std::ifstream tcsv("/tmp/eendss_cli/spec_tone.csv");
  const int64_t expected_bin = static_cast<int64_t>(freq / (kSampleRate / 512.0));
  int rows = 0;
  while (std::getline(tcsv, line)) {
    std::istringstream row(line);
    int64_t argmax = 0, idx = 0;
    double best = -1e300;
    while (std::getline(row, cell, ',')) {
      const double v = std::stod(cell);
      if (v > best) {
        best = v;
        argmax = idx;
      }
      ++idx;
    }
    EXPECT_NEAR(static_cast<double>(argmax), static_cast<double>(expected_bin), 1.0);
    ++rows;
  }
  EXPECT_EQ(rows, stft_num_frames(8000, 512, 64));
}
