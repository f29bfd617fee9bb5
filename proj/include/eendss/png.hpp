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

#ifndef EENDSS_PNG_HPP_
#define EENDSS_PNG_HPP_

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "eendss/common.hpp"

namespace eendss {

namespace detail {

inline void png_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
  auto be32 = [](uint32_t v) {
    return std::vector<uint8_t>{static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                                static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  };
  auto len = be32(static_cast<uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(len.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()),
                             static_cast<std::streamsize>(data.size()));
  uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  auto crcb = be32(crc);
  f.write(reinterpret_cast<const char*>(crcb.data()), 4);
}

}  // namespace detail

// 8-bit grayscale PNG; pixels row-major, `width * height` bytes.
inline void write_png_gray(const std::string& path, const std::vector<uint8_t>& pixels,
                           int64_t width, int64_t height) {
  if (static_cast<int64_t>(pixels.size()) != width * height)
    throw ValueError("write_png_gray: pixel count does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open PNG for writing: " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr(13);
  auto put32 = [&](size_t off, uint32_t v) {
    ihdr[off] = static_cast<uint8_t>(v >> 24);
    ihdr[off + 1] = static_cast<uint8_t>(v >> 16);
    ihdr[off + 2] = static_cast<uint8_t>(v >> 8);
    ihdr[off + 3] = static_cast<uint8_t>(v);
  };
  put32(0, static_cast<uint32_t>(width));
  put32(4, static_cast<uint32_t>(height));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 0;   // grayscale
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  detail::png_chunk(f, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<uint8_t> raw(static_cast<size_t>(height * (width + 1)));
  for (int64_t y = 0; y < height; ++y) {
    raw[static_cast<size_t>(y * (width + 1))] = 0;
    std::copy(pixels.begin() + y * width, pixels.begin() + (y + 1) * width,
              raw.begin() + y * (width + 1) + 1);
  }
  uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_size);
  if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("PNG deflate failed: " + path);
  comp.resize(comp_size);
  detail::png_chunk(f, "IDAT", comp);
  detail::png_chunk(f, "IEND", {});
  if (!f) throw IoError("short write on PNG: " + path);
}

}  // namespace eendss

#endif  // EENDSS_PNG_HPP_
