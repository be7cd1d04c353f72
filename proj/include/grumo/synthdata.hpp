#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grumo/gt01.hpp"
#include "grumo/rng.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

/// One synthetic scene: a 1x3xHxW image in [0,1] and its exact ground-truth
/// depth in meters. Regeneration from the seed is bitwise identical.
struct Scene {
  std::uint64_t seed = 0;
  Tensor image;     // 1x3xHxW
  Tensor depth_gt;  // 1x1xHxW
};

struct SceneSet {
  std::string split = "train";
  int h = 64, w = 64;
  float d_min = 1.0f, d_max = 10.0f;
  std::vector<Scene> scenes;
};

namespace detail {

struct Primitive {
  bool disk = false;
  double cx = 0, cy = 0;   // pixel units
  double rx = 0, ry = 0;   // half extents / radii
  float depth = 0;
  float albedo[3] = {0, 0, 0};

  bool covers(double x, double y) const {
    if (disk) {
      double dx = (x - cx) / rx, dy = (y - cy) / ry;
      return dx * dx + dy * dy <= 1.0;
    }
    return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
  }
};

struct ScenePlan {
  float base = 0, slope_x = 0, slope_y = 0;
  float plane_albedo[3] = {0, 0, 0};
  std::vector<Primitive> shapes;
};

// Draw order is part of the format: plane, plane albedo, shape count, then
// per shape (type, centre, extents, depth, albedo), then per-pixel noise.
inline ScenePlan plan_scene(SplitMix64& rng, int h, int w, float d_min,
                            float d_max, int forced_shape_count) {
  ScenePlan plan;
  float range = d_max - d_min;
  // Slopes are bounded so the plane stays inside [d_min, d_max] on its own.
  plan.base = float(rng.uniform(d_min + 0.3 * range, d_min + 0.7 * range));
  plan.slope_x = float(rng.uniform(-0.25, 0.25) * range);
  plan.slope_y = float(rng.uniform(-0.25, 0.25) * range);
  for (int c = 0; c < 3; ++c)
    plan.plane_albedo[c] = float(rng.uniform(0.3, 1.0));
  int count = forced_shape_count >= 0 ? forced_shape_count
                                      : int(3 + rng.below(5));
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.disk = rng.below(2) == 1;
    p.cx = rng.uniform(0.0, double(w));
    p.cy = rng.uniform(0.0, double(h));
    p.rx = rng.uniform(0.08, 0.25) * w;
    p.ry = rng.uniform(0.08, 0.25) * h;
    p.depth = float(rng.uniform(d_min, d_max));
    for (int c = 0; c < 3; ++c) p.albedo[c] = float(rng.uniform(0.3, 1.0));
    plan.shapes.push_back(p);
  }
  return plan;
}

}  // namespace detail

/// A tilted background plane overlaid with seeded rectangles and disks; the
/// nearest primitive wins at every pixel. Shading is monotone in depth
/// (s = (d_max - d)/(d_max - d_min)) modulated by per-shape albedo, plus
/// seeded Gaussian texture noise of std 0.02, clamped to [0,1].
inline Scene gen_scene(std::uint64_t seed, int h, int w, float d_min,
                       float d_max, int forced_shape_count = -1) {
  if (h < 8 || w < 8 || h % 8 != 0 || w % 8 != 0)
    throw std::invalid_argument(
        "gen_scene: height and width must be positive multiples of 8, got " +
        std::to_string(h) + "x" + std::to_string(w));
  if (!(d_min > 0.0f) || !(d_max > d_min))
    throw std::invalid_argument("gen_scene: need 0 < d_min < d_max");
  SplitMix64 rng(seed);
  detail::ScenePlan plan =
      detail::plan_scene(rng, h, w, d_min, d_max, forced_shape_count);

  Scene scene;
  scene.seed = seed;
  scene.depth_gt = Tensor({1, 1, h, w});
  scene.image = Tensor({1, 3, h, w});
  float range = d_max - d_min;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float d = plan.base + plan.slope_x * (float(x) / w - 0.5f) +
                plan.slope_y * (float(y) / h - 0.5f);
      const float* albedo = plan.plane_albedo;
      for (const auto& shape : plan.shapes)
        if (shape.covers(x + 0.5, y + 0.5) && shape.depth < d) {
          d = shape.depth;
          albedo = shape.albedo;
        }
      scene.depth_gt.at(0, 0, y, x) = d;
      float shade = (d_max - d) / range;
      for (int c = 0; c < 3; ++c) {
        float v = shade * albedo[c] + 0.02f * float(rng.gaussian());
        scene.image.at(0, c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  return scene;
}

inline std::vector<std::uint64_t> derive_scene_seeds(std::uint64_t master,
                                                     int count) {
  std::vector<std::uint64_t> seeds;
  seeds.reserve(count);
  for (int i = 0; i < count; ++i)
    seeds.push_back(mix_seed(master, std::uint64_t(i)));
  return seeds;
}

inline SceneSet gen_sceneset(std::uint64_t master_seed, int count, int h,
                             int w, float d_min, float d_max,
                             const std::string& split) {
  SceneSet set;
  set.split = split;
  set.h = h;
  set.w = w;
  set.d_min = d_min;
  set.d_max = d_max;
  for (std::uint64_t s : derive_scene_seeds(master_seed, count))
    set.scenes.push_back(gen_scene(s, h, w, d_min, d_max));
  return set;
}

// Directory layout: manifest.json plus scenes/<seed>/{image,depth}.gt01.

inline void write_sceneset(const SceneSet& set,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "scenes");
  nlohmann::json manifest;
  manifest["split"] = set.split;
  manifest["height"] = set.h;
  manifest["width"] = set.w;
  manifest["d_min"] = set.d_min;
  manifest["d_max"] = set.d_max;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& scene : set.scenes) seeds.push_back(scene.seed);
  manifest["seeds"] = seeds;
  {
    std::string text = manifest.dump(2);
    text.push_back('\n');
    write_bytes(dir / "manifest.json",
                std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  for (const auto& scene : set.scenes) {
    auto sdir = dir / "scenes" / std::to_string(scene.seed);
    std::filesystem::create_directories(sdir);
    write_gt01(sdir / "image.gt01", scene.image);
    write_gt01(sdir / "depth.gt01", scene.depth_gt);
  }
}

inline SceneSet read_sceneset(const std::filesystem::path& dir) {
  auto manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f)
    throw std::runtime_error("dataset: cannot open " +
                             manifest_path.string());
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const std::exception& e) {
    throw std::runtime_error("dataset: malformed manifest " +
                             manifest_path.string() + ": " + e.what());
  }
  SceneSet set;
  try {
    set.split = manifest.at("split").get<std::string>();
    set.h = manifest.at("height").get<int>();
    set.w = manifest.at("width").get<int>();
    set.d_min = manifest.at("d_min").get<float>();
    set.d_max = manifest.at("d_max").get<float>();
    for (const auto& s : manifest.at("seeds")) {
      Scene scene;
      scene.seed = s.get<std::uint64_t>();
      auto sdir = dir / "scenes" / std::to_string(scene.seed);
      scene.image = read_gt01(sdir / "image.gt01");
      scene.depth_gt = read_gt01(sdir / "depth.gt01");
      Shape img{1, 3, set.h, set.w}, dep{1, 1, set.h, set.w};
      if (!(scene.image.shape() == img))
        throw std::runtime_error("dataset: scene " +
                                 std::to_string(scene.seed) +
                                 " image has shape " +
                                 scene.image.shape().str() + ", manifest says " +
                                 img.str());
      if (!(scene.depth_gt.shape() == dep))
        throw std::runtime_error("dataset: scene " +
                                 std::to_string(scene.seed) +
                                 " depth has shape " +
                                 scene.depth_gt.shape().str() +
                                 ", manifest says " + dep.str());
      set.scenes.push_back(std::move(scene));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset: manifest " + manifest_path.string() +
                             " is missing fields: " + e.what());
  }
  return set;
}

}  // namespace grumo
