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
// RTTM interchange: frame labels convert to segments by merging consecutive
// positive frames; timestamps are seconds on the 8 ms diarization frame
// grid, so the frame <-> segment conversion round-trips exactly.

#ifndef EENDSS_RTTM_HPP_
#define EENDSS_RTTM_HPP_

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eendss/common.hpp"

namespace eendss {

struct RttmSegment {
  std::string file_id;
  std::string speaker;
  double onset = 0.0;
  double duration = 0.0;
};

inline std::vector<RttmSegment> labels_to_segments(const std::vector<uint8_t>& labels,
                                                   int64_t speakers, int64_t frames,
                                                   double frame_seconds,
                                                   const std::string& file_id) {
  std::vector<RttmSegment> segs;
  for (int64_t c = 0; c < speakers; ++c) {
    const uint8_t* row = &labels[static_cast<size_t>(c * frames)];
    int64_t t = 0;
    while (t < frames) {
      if (!row[t]) {
        ++t;
        continue;
      }
      int64_t start = t;
      while (t < frames && row[t]) ++t;
      segs.push_back({file_id, "spk" + std::to_string(c + 1),
                      static_cast<double>(start) * frame_seconds,
                      static_cast<double>(t - start) * frame_seconds});
    }
  }
  return segs;
}

inline void write_rttm(const std::string& path, const std::vector<RttmSegment>& segs) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open RTTM for writing: " + path);
  char line[256];
  for (const auto& s : segs) {
    std::snprintf(line, sizeof(line), "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA>\n",
                  s.file_id.c_str(), s.onset, s.duration, s.speaker.c_str());
    f << line;
  }
}

inline std::vector<RttmSegment> read_rttm(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open RTTM: " + path);
  std::vector<RttmSegment> segs;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == ';') continue;
    std::istringstream is(line);
    std::string type, file_id, chan, na1, na2, spk;
    double onset, dur;
    if (!(is >> type >> file_id >> chan >> onset >> dur >> na1 >> na2 >> spk)) continue;
    if (type != "SPEAKER") continue;
    segs.push_back({file_id, spk, onset, dur});
  }
  return segs;
}

// Rasterizes segments onto the frame grid. Speaker rows are ordered by
// first appearance in the file, so simulator-written references (spk1,
// spk2, ...) come back in reference order.
inline std::vector<uint8_t> segments_to_labels(const std::vector<RttmSegment>& segs,
                                               int64_t frames, double frame_seconds,
                                               int64_t* speakers_out) {
  std::vector<std::string> order;
  std::map<std::string, int64_t> index;
  for (const auto& s : segs)
    if (index.emplace(s.speaker, static_cast<int64_t>(order.size())).second)
      order.push_back(s.speaker);
  const int64_t speakers = static_cast<int64_t>(order.size());
  std::vector<uint8_t> labels(static_cast<size_t>(speakers * frames), 0);
  for (const auto& s : segs) {
    const int64_t c = index[s.speaker];
    const auto start = static_cast<int64_t>(std::llround(s.onset / frame_seconds));
    const auto len = static_cast<int64_t>(std::llround(s.duration / frame_seconds));
    for (int64_t t = std::max<int64_t>(0, start); t < std::min(frames, start + len); ++t)
      labels[static_cast<size_t>(c * frames + t)] = 1;
  }
  if (speakers_out) *speakers_out = speakers;
  return labels;
}

}  // namespace eendss

#endif  // EENDSS_RTTM_HPP_
