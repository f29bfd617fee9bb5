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
// Versioned binary parameter container: JSON header (hyperparameters, RNG
// seed) followed by named entries of raw little-endian float32 data.

#ifndef EENDSS_CHECKPOINT_HPP_
#define EENDSS_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eendss/tensor.hpp"

namespace eendss {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline constexpr char kCkptMagic[4] = {'E', 'S', 'S', 'C'};
inline constexpr uint32_t kCkptVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor>> entries;
};

namespace detail {

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const nlohmann::json& header,
                            const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(kCkptMagic, 4);
  detail::write_pod(f, kCkptVersion);
  const std::string hdr = header.dump();
  detail::write_pod(f, static_cast<uint64_t>(hdr.size()));
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  detail::write_pod(f, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_pod(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(f, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) detail::write_pod(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.value().data()),
            static_cast<std::streamsize>(t.value().size() * sizeof(float)));
  }
  if (!f) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  const auto version = detail::read_pod<uint32_t>(f);
  if (version != kCkptVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const auto hdr_len = detail::read_pod<uint64_t>(f);
  std::string hdr(hdr_len, '\0');
  f.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  Checkpoint ck;
  ck.header = nlohmann::json::parse(hdr);
  const auto count = detail::read_pod<uint32_t>(f);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto ndim = detail::read_pod<uint32_t>(f);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::read_pod<uint32_t>(f);
    std::vector<float> data(static_cast<size_t>(numel_of(shape)));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!f) throw IoError("truncated checkpoint: " + path);
    ck.entries.emplace_back(name, Tensor::from_vec(shape, std::move(data)));
  }
  return ck;
}

// Order-insensitive content hash of named parameters; used by tests to
// verify which parts of a model a training step actually touched.
inline uint64_t params_hash(const std::vector<std::pair<std::string, Tensor>>& entries) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : entries) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(t.value().data(), t.value().size() * sizeof(float), h);
  }
  return h;
}

}  // namespace eendss

#endif  // EENDSS_CHECKPOINT_HPP_
