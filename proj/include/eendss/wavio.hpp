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

#ifndef EENDSS_WAVIO_HPP_
#define EENDSS_WAVIO_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "eendss/dsp.hpp"

namespace eendss {

// Mono PCM16 RIFF writer.
inline void write_wav(const std::string& path, const Waveform& x, int sample_rate = kSampleRate) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV for writing: " + path);
  const uint32_t data_size = static_cast<uint32_t>(x.size() * 2);
  const uint32_t riff_size = 36 + data_size;
  const uint16_t channels = 1, bits = 16, block = 2;
  const uint32_t byte_rate = static_cast<uint32_t>(sample_rate) * block;
  const uint32_t fmt_size = 16;
  const uint16_t pcm = 1;
  const uint32_t rate = static_cast<uint32_t>(sample_rate);
  f.write("RIFF", 4);
  f.write(reinterpret_cast<const char*>(&riff_size), 4);
  f.write("WAVEfmt ", 8);
  f.write(reinterpret_cast<const char*>(&fmt_size), 4);
  f.write(reinterpret_cast<const char*>(&pcm), 2);
  f.write(reinterpret_cast<const char*>(&channels), 2);
  f.write(reinterpret_cast<const char*>(&rate), 4);
  f.write(reinterpret_cast<const char*>(&byte_rate), 4);
  f.write(reinterpret_cast<const char*>(&block), 2);
  f.write(reinterpret_cast<const char*>(&bits), 2);
  f.write("data", 4);
  f.write(reinterpret_cast<const char*>(&data_size), 4);
  std::vector<int16_t> pcm16(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    float v = std::min(std::max(x[i], -1.0f), 1.0f);
    pcm16[i] = static_cast<int16_t>(std::lrintf(v * 32767.0f));
  }
  f.write(reinterpret_cast<const char*>(pcm16.data()),
          static_cast<std::streamsize>(pcm16.size() * 2));
  if (!f) throw IoError("short write on WAV: " + path);
}

// Mono PCM16 RIFF reader; skips unknown chunks.
inline Waveform read_wav(const std::string& path, int* sample_rate = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV: " + path);
  char id[4];
  uint32_t sz;
  f.read(id, 4);
  f.read(reinterpret_cast<char*>(&sz), 4);
  char wave[4];
  f.read(wave, 4);
  if (!f || std::memcmp(id, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);
  uint16_t channels = 0, bits = 0, fmt = 0;
  uint32_t rate = 0;
  Waveform out;
  while (f.read(id, 4) && f.read(reinterpret_cast<char*>(&sz), 4)) {
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> buf(sz);
      f.read(buf.data(), sz);
      std::memcpy(&fmt, buf.data(), 2);
      std::memcpy(&channels, buf.data() + 2, 2);
      std::memcpy(&rate, buf.data() + 4, 4);
      std::memcpy(&bits, buf.data() + 14, 2);
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (fmt != 1 || channels != 1 || bits != 16)
        throw IoError(path + ": only PCM16 mono supported (fmt " + std::to_string(fmt) + ", " +
                      std::to_string(channels) + " ch, " + std::to_string(bits) + " bit)");
      std::vector<int16_t> pcm16(sz / 2);
      f.read(reinterpret_cast<char*>(pcm16.data()), sz);
      out.resize(pcm16.size());
      for (size_t i = 0; i < pcm16.size(); ++i)
        out[i] = static_cast<float>(pcm16[i]) / 32767.0f;
      break;
    } else {
      f.seekg(sz + (sz & 1), std::ios::cur);
    }
  }
  if (out.empty() && rate == 0) throw IoError("no data chunk in WAV: " + path);
  if (sample_rate) *sample_rate = static_cast<int>(rate);
  return out;
}

}  // namespace eendss

#endif  // EENDSS_WAVIO_HPP_
