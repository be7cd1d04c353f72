#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>

#include "grumo/resample.hpp"
#include "grumo/rng.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

enum class AugKind { HFlip, Gray, Noise, Rotate, FeatHFlip, FeatNoise };
enum class AugSpace { Image, Feature };

/// A transformation with a forward apply, an exact inverse where one exists,
/// and a validity-mask contract. Geometric kinds (HFlip, Rotate, FeatHFlip)
/// invert geometrically; photometric kinds invert as the identity.
struct Augmentation {
  AugKind kind = AugKind::HFlip;
  float noise_std = 0.0f;       // image space: absolute on the [0,1] range;
                                // feature space: multiple of per-tensor stddev
  std::uint64_t seed = 0;
  float angle_deg = 0.0f;

  AugSpace space() const {
    return (kind == AugKind::FeatHFlip || kind == AugKind::FeatNoise)
               ? AugSpace::Feature
               : AugSpace::Image;
  }
  bool geometric() const {
    return kind == AugKind::HFlip || kind == AugKind::Rotate ||
           kind == AugKind::FeatHFlip;
  }

  static Augmentation hflip() { return {AugKind::HFlip}; }
  static Augmentation gray() { return {AugKind::Gray}; }
  static Augmentation noise(float std, std::uint64_t seed) {
    return {AugKind::Noise, std, seed};
  }
  static Augmentation rotate(float deg) {
    return {AugKind::Rotate, 0.0f, 0, deg};
  }
  static Augmentation feat_hflip() { return {AugKind::FeatHFlip}; }
  static Augmentation feat_noise(float std, std::uint64_t seed) {
    return {AugKind::FeatNoise, std, seed};
  }
};

constexpr float kDefaultImageNoiseStd = 0.02f;
constexpr float kDefaultFeatureNoiseStd = 0.1f;

inline Tensor add_seeded_noise(const Tensor& t, float std, std::uint64_t seed) {
  if (std == 0.0f) return t;
  SplitMix64 rng(seed);
  Tensor out = t;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = float(double(out[i]) + double(std) * rng.gaussian());
  return out;
}

inline Tensor to_gray3(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.c != 3)
    throw std::invalid_argument("gray: needs a 3-channel image, got " +
                                s.str());
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        float luma = 0.299f * t.at(n, 0, y, x) + 0.587f * t.at(n, 1, y, x) +
                     0.114f * t.at(n, 2, y, x);
        for (int c = 0; c < 3; ++c) out.at(n, c, y, x) = luma;
      }
  return out;
}

inline Tensor apply(const Augmentation& aug, const Tensor& t) {
  switch (aug.kind) {
    case AugKind::HFlip:
    case AugKind::FeatHFlip:
      return hflip_w(t);
    case AugKind::Gray:
      return to_gray3(t);
    case AugKind::Noise:
      return add_seeded_noise(t, aug.noise_std, aug.seed);
    case AugKind::FeatNoise: {
      float abs_std = aug.noise_std * float(stddev64(t));
      return add_seeded_noise(t, abs_std, aug.seed);
    }
    case AugKind::Rotate:
      return rotate_bilinear(t, aug.angle_deg).first;
  }
  throw std::logic_error("apply: unknown augmentation");
}

/// Maps a depth map predicted in the augmented frame back to the original
/// frame. Photometric kinds return the map unchanged with an all-true mask.
inline std::pair<Tensor, Mask> invert(const Augmentation& aug,
                                      const Tensor& d) {
  const Shape& s = d.shape();
  switch (aug.kind) {
    case AugKind::HFlip:
    case AugKind::FeatHFlip:
      return {hflip_w(d), Mask::all(s.h, s.w, true)};
    case AugKind::Gray:
    case AugKind::Noise:
    case AugKind::FeatNoise:
      return {d, Mask::all(s.h, s.w, true)};
    case AugKind::Rotate: {
      // Forward-frame validity is data independent; the inverse resample
      // additionally rejects pixels touching any invalid forward pixel.
      Mask fwd = rotate_valid(s.h, s.w, aug.angle_deg);
      return rotate_bilinear(d, -aug.angle_deg, &fwd);
    }
  }
  throw std::logic_error("invert: unknown augmentation");
}

inline std::string to_string(const Augmentation& aug) {
  std::ostringstream os;
  switch (aug.kind) {
    case AugKind::HFlip:
      return "hflip";
    case AugKind::Gray:
      return "gray";
    case AugKind::Noise:
      os << "noise:" << aug.noise_std << ":" << aug.seed;
      return os.str();
    case AugKind::Rotate:
      os << "rot:" << aug.angle_deg;
      return os.str();
    case AugKind::FeatHFlip:
      return "feat-hflip";
    case AugKind::FeatNoise:
      os << "feat-noise:" << aug.noise_std << ":" << aug.seed;
      return os.str();
  }
  return "?";
}

/// Parses `hflip | gray | noise:<std>:<seed> | rot:<deg> | feat-hflip |
/// feat-noise:<std>:<seed>`. The noise forms accept bare names with default
/// std and seed 1.
inline Augmentation parse_augmentation(const std::string& spec) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      std::size_t next = s.find(':', pos);
      if (next == std::string::npos) {
        parts.push_back(s.substr(pos));
        break;
      }
      parts.push_back(s.substr(pos, next - pos));
      pos = next + 1;
    }
    return parts;
  };
  auto parts = split(spec);
  const std::string& name = parts[0];
  auto want = [&](std::size_t lo, std::size_t hi) {
    if (parts.size() < lo || parts.size() > hi)
      throw std::invalid_argument("augmentation '" + spec +
                                  "': wrong number of parameters");
  };
  auto to_f = [&](const std::string& s) {
    try {
      return std::stof(s);
    } catch (const std::exception&) {
      throw std::invalid_argument("augmentation '" + spec +
                                  "': malformed number '" + s + "'");
    }
  };
  auto to_u64 = [&](const std::string& s) {
    try {
      return std::uint64_t(std::stoull(s));
    } catch (const std::exception&) {
      throw std::invalid_argument("augmentation '" + spec +
                                  "': malformed seed '" + s + "'");
    }
  };
  if (name == "hflip") {
    want(1, 1);
    return Augmentation::hflip();
  }
  if (name == "gray") {
    want(1, 1);
    return Augmentation::gray();
  }
  if (name == "noise") {
    want(1, 3);
    float std = parts.size() > 1 ? to_f(parts[1]) : kDefaultImageNoiseStd;
    std::uint64_t seed = parts.size() > 2 ? to_u64(parts[2]) : 1;
    return Augmentation::noise(std, seed);
  }
  if (name == "rot") {
    want(2, 2);
    return Augmentation::rotate(to_f(parts[1]));
  }
  if (name == "feat-hflip") {
    want(1, 1);
    return Augmentation::feat_hflip();
  }
  if (name == "feat-noise") {
    want(1, 3);
    float std = parts.size() > 1 ? to_f(parts[1]) : kDefaultFeatureNoiseStd;
    std::uint64_t seed = parts.size() > 2 ? to_u64(parts[2]) : 1;
    return Augmentation::feat_noise(std, seed);
  }
  throw std::invalid_argument("unknown augmentation '" + spec + "'");
}

}  // namespace grumo
