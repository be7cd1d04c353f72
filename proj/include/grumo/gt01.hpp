#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "grumo/tensor.hpp"

namespace grumo {

// GT01 tensor container. Layout, all little-endian regardless of host:
//   bytes 0-3   magic 'G' 'T' '0' '1'
//   bytes 4-7   u32 rank
//   then        rank u32 dims
//   then        row-major f32 payload
// Values are assembled byte-by-byte so the format is bit-exact on hosts of
// either endianness.

namespace detail {

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v & 0xFF));
  out.push_back(std::uint8_t((v >> 8) & 0xFF));
  out.push_back(std::uint8_t((v >> 16) & 0xFF));
  out.push_back(std::uint8_t((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_gt01(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(24 + t.size() * 4);
  out.push_back('G');
  out.push_back('T');
  out.push_back('0');
  out.push_back('1');
  detail::put_u32_le(out, 4);
  const Shape& s = t.shape();
  detail::put_u32_le(out, std::uint32_t(s.n));
  detail::put_u32_le(out, std::uint32_t(s.c));
  detail::put_u32_le(out, std::uint32_t(s.h));
  detail::put_u32_le(out, std::uint32_t(s.w));
  for (float v : t.values())
    detail::put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Tensor decode_gt01(const std::vector<std::uint8_t>& bytes,
                          const std::string& origin) {
  auto fail = [&](std::size_t offset, const std::string& what) -> Tensor {
    throw std::runtime_error("gt01: " + origin + ": " + what +
                             " at byte offset " + std::to_string(offset));
  };
  if (bytes.size() < 8) return fail(bytes.size(), "truncated header");
  if (bytes[0] != 'G' || bytes[1] != 'T' || bytes[2] != '0' ||
      bytes[3] != '1')
    return fail(0, "bad magic");
  std::uint32_t rank = detail::get_u32_le(bytes.data() + 4);
  if (rank < 1 || rank > 4) return fail(4, "unsupported rank " + std::to_string(rank));
  if (bytes.size() < 8 + std::size_t(rank) * 4)
    return fail(bytes.size(), "truncated dims");
  std::uint32_t dims[4] = {1, 1, 1, 1};
  // Lower ranks fill the trailing axes: rank-1 is a W vector, rank-2 HxW.
  for (std::uint32_t i = 0; i < rank; ++i)
    dims[4 - rank + i] = detail::get_u32_le(bytes.data() + 8 + i * 4);
  std::size_t header = 8 + std::size_t(rank) * 4;
  std::size_t count =
      std::size_t(dims[0]) * dims[1] * dims[2] * dims[3];
  if (bytes.size() != header + count * 4)
    return fail(std::min(bytes.size(), header + count * 4),
                "payload size mismatch (expected " +
                    std::to_string(header + count * 4) + " bytes, have " +
                    std::to_string(bytes.size()) + ")");
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = std::bit_cast<float>(
        detail::get_u32_le(bytes.data() + header + i * 4));
  return Tensor({int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])},
                std::move(data));
}

inline void write_bytes(const std::filesystem::path& path,
                        const std::vector<std::uint8_t>& bytes) {
  // Temp-then-rename keeps partially written files out of readers' view.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string());
    f.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::uint8_t> read_bytes(
    const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_gt01(const std::filesystem::path& path, const Tensor& t) {
  write_bytes(path, encode_gt01(t));
}

inline Tensor read_gt01(const std::filesystem::path& path) {
  return decode_gt01(read_bytes(path), path.string());
}

}  // namespace grumo
