#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "grumo/gt01.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

// Binary PGM (P5), maxval 65535. Samples are big-endian per the PGM
// standard; input values are clamped to [0,1] and quantised with
// round-half-up: v -> round(v * 65535).
inline std::vector<std::uint8_t> encode_pgm16(const Tensor& map) {
  const Shape& s = map.shape();
  if (s.n != 1 || s.c != 1)
    throw std::invalid_argument("pgm16: expected a 1x1xHxW map, got " +
                                s.str());
  std::string header =
      "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + map.size() * 2);
  for (float v : map.values()) {
    float c = std::min(1.0f, std::max(0.0f, v));
    auto q = std::uint16_t(std::lround(double(c) * 65535.0));
    out.push_back(std::uint8_t(q >> 8));
    out.push_back(std::uint8_t(q & 0xFF));
  }
  return out;
}

inline void write_pgm16(const std::filesystem::path& path, const Tensor& map) {
  write_bytes(path, encode_pgm16(map));
}

}  // namespace grumo
