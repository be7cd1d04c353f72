#include <doctest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <unistd.h>

#include "grumo/gt01.hpp"
#include "grumo/pgm.hpp"
#include "grumo/rng.hpp"

using namespace grumo;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor t(s);
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = float(rng.uniform(-100.0, 100.0));
  return t;
}

// Writer for a simulated opposite-endian host: values are first laid out as
// big-endian words (the "native" order of the foreign machine), then each
// word is swapped on the way out. A correct little-endian format must make
// the two writers byte-identical.
std::vector<std::uint8_t> foreign_host_encode(const Tensor& t) {
  auto put_swapped_be = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t be[4] = {std::uint8_t(v >> 24), std::uint8_t(v >> 16),
                          std::uint8_t(v >> 8), std::uint8_t(v)};
    out.push_back(be[3]);
    out.push_back(be[2]);
    out.push_back(be[1]);
    out.push_back(be[0]);
  };
  std::vector<std::uint8_t> out = {'G', 'T', '0', '1'};
  put_swapped_be(out, 4);
  const Shape& s = t.shape();
  put_swapped_be(out, std::uint32_t(s.n));
  put_swapped_be(out, std::uint32_t(s.c));
  put_swapped_be(out, std::uint32_t(s.h));
  put_swapped_be(out, std::uint32_t(s.w));
  for (float v : t.values())
    put_swapped_be(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("grumo_fmt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("gt01: golden byte layout for a tiny tensor") {
  Tensor t = Tensor::from({1, 1, 1, 2}, {1.0f, -2.0f});
  std::vector<std::uint8_t> bytes = encode_gt01(t);
  std::vector<std::uint8_t> expected = {
      'G',  'T',  '0',  '1',        // magic
      4,    0,    0,    0,          // rank
      1,    0,    0,    0,          // n
      1,    0,    0,    0,          // c
      1,    0,    0,    0,          // h
      2,    0,    0,    0,          // w
      0x00, 0x00, 0x80, 0x3F,       // 1.0f little-endian
      0x00, 0x00, 0x00, 0xC0,       // -2.0f little-endian
  };
  CHECK(bytes == expected);
}

TEST_CASE("gt01: file round trips are bitwise stable") {
  TempDir dir("gt01");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng(seed + 500);
    Shape s{1 + int(rng.below(2)), 1 + int(rng.below(4)),
            1 + int(rng.below(8)), 1 + int(rng.below(8))};
    Tensor t = random_tensor(s, seed);
    fs::path file = dir.path / ("t" + std::to_string(seed) + ".gt01");
    write_gt01(file, t);
    CHECK(same_bits(read_gt01(file), t));
  }
}

TEST_CASE("gt01: byte-swapped-host writer produces identical bytes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor t = random_tensor({2, 3, 4, 5}, seed);
    CHECK(encode_gt01(t) == foreign_host_encode(t));
    CHECK(same_bits(decode_gt01(foreign_host_encode(t), "foreign"), t));
  }
}

TEST_CASE("gt01: lower-rank files fill the trailing axes") {
  std::vector<std::uint8_t> bytes = {'G', 'T', '0', '1', 2, 0, 0, 0,
                                     2,   0,   0,   0,   3, 0, 0, 0};
  for (int i = 0; i < 6; ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(float(i));
    bytes.push_back(std::uint8_t(bits & 0xFF));
    bytes.push_back(std::uint8_t((bits >> 8) & 0xFF));
    bytes.push_back(std::uint8_t((bits >> 16) & 0xFF));
    bytes.push_back(std::uint8_t((bits >> 24) & 0xFF));
  }
  Tensor t = decode_gt01(bytes, "rank2");
  CHECK(t.shape() == Shape{1, 1, 2, 3});
  CHECK(t.at(0, 0, 1, 2) == 5.0f);
}

TEST_CASE("gt01: corrupt files are rejected with a byte offset") {
  Tensor t = random_tensor({1, 1, 2, 2}, 3);
  std::vector<std::uint8_t> good = encode_gt01(t);

  std::vector<std::uint8_t> bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_gt01(bad_magic, "f"),
                       doctest::Contains("offset 0"), std::runtime_error);

  std::vector<std::uint8_t> truncated(good.begin(), good.end() - 3);
  CHECK_THROWS_WITH_AS(decode_gt01(truncated, "f"),
                       doctest::Contains("size mismatch"),
                       std::runtime_error);

  std::vector<std::uint8_t> bad_rank = good;
  bad_rank[4] = 9;
  CHECK_THROWS_WITH_AS(decode_gt01(bad_rank, "f"),
                       doctest::Contains("offset 4"), std::runtime_error);
}

TEST_CASE("pgm16: header, big-endian samples, round-half-up quantisation") {
  Tensor map = Tensor::from({1, 1, 1, 3}, {0.0f, 0.5f, 1.0f});
  std::vector<std::uint8_t> bytes = encode_pgm16(map);
  std::string header = "P5\n3 1\n65535\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(std::memcmp(bytes.data(), header.data(), header.size()) == 0);
  const std::uint8_t* s = bytes.data() + header.size();
  CHECK(s[0] == 0x00);  // 0
  CHECK(s[1] == 0x00);
  CHECK(s[2] == 0x80);  // round(32767.5) = 32768, half-up
  CHECK(s[3] == 0x00);
  CHECK(s[4] == 0xFF);  // 65535
  CHECK(s[5] == 0xFF);

  // out-of-range inputs clamp instead of wrapping
  Tensor wild = Tensor::from({1, 1, 1, 2}, {-0.5f, 1.5f});
  std::vector<std::uint8_t> clamped = encode_pgm16(wild);
  std::string wild_header = "P5\n2 1\n65535\n";
  const std::uint8_t* c = clamped.data() + wild_header.size();
  CHECK(c[0] == 0x00);
  CHECK(c[1] == 0x00);
  CHECK(c[2] == 0xFF);
  CHECK(c[3] == 0xFF);
  CHECK_THROWS_AS(encode_pgm16(Tensor({1, 3, 2, 2})), std::invalid_argument);
}

TEST_CASE("pgm16: all-half map quantises every sample to 32768") {
  Tensor map = Tensor::full({1, 1, 4, 4}, 0.5f);
  std::vector<std::uint8_t> bytes = encode_pgm16(map);
  std::string header = "P5\n4 4\n65535\n";
  for (std::size_t i = header.size(); i + 1 < bytes.size(); i += 2) {
    CHECK(bytes[i] == 0x80);
    CHECK(bytes[i + 1] == 0x00);
  }
}
