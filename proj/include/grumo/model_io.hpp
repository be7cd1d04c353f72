#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "grumo/gt01.hpp"
#include "grumo/model.hpp"

namespace grumo {

// Model directory: manifest.json plus one GT01 file per named weight.
// Manifest keys: arch, layer_tags, fixture_abs_rel, seed, weights.

constexpr float kFixtureLearningRate = 0.0005f;
constexpr float kFixtureMomentum = 0.9f;

inline void save_model(const Model& m, const std::filesystem::path& dir) {
  validate_weights(m);
  std::filesystem::create_directories(dir / "weights");
  nlohmann::json arch;
  arch["input_channels"] = m.config.input_channels;
  arch["base_channels"] = m.config.base_channels;
  arch["encoder_stages"] = m.config.encoder_stages;
  arch["decoder_layers"] = m.config.decoder_layers;
  arch["skip_connections"] = m.config.skip_connections;
  arch["predictive"] = m.config.predictive;
  arch["d_min"] = m.config.d_min;
  arch["d_max"] = m.config.d_max;
  arch["kernel_size"] = m.config.kernel_size;
  arch["optimizer"] = {{"kind", "sgd-momentum"},
                       {"learning_rate", kFixtureLearningRate},
                       {"momentum", kFixtureMomentum}};
  nlohmann::json manifest;
  manifest["arch"] = arch;
  manifest["layer_tags"] = m.layer_tags;
  manifest["fixture_abs_rel"] = m.fixture_abs_rel;
  manifest["seed"] = m.seed;
  nlohmann::json weights;
  for (const auto& [name, tensor] : m.weights) {
    const Shape& s = tensor.shape();
    weights[name] = {{"file", "weights/" + name + ".gt01"},
                     {"shape", {s.n, s.c, s.h, s.w}}};
    write_gt01(dir / "weights" / (name + ".gt01"), tensor);
  }
  manifest["weights"] = weights;
  std::string text = manifest.dump(2);
  text.push_back('\n');
  write_bytes(dir / "manifest.json",
              std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline Model load_model(const std::filesystem::path& dir) {
  auto manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f)
    throw std::runtime_error("model: cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    f >> manifest;
  } catch (const std::exception& e) {
    throw std::runtime_error("model: malformed manifest " +
                             manifest_path.string() + ": " + e.what());
  }
  Model m;
  try {
    const auto& arch = manifest.at("arch");
    m.config.input_channels = arch.at("input_channels").get<int>();
    m.config.base_channels = arch.at("base_channels").get<int>();
    m.config.encoder_stages = arch.at("encoder_stages").get<int>();
    m.config.decoder_layers = arch.at("decoder_layers").get<int>();
    m.config.skip_connections = arch.at("skip_connections").get<bool>();
    m.config.predictive = arch.at("predictive").get<bool>();
    m.config.d_min = arch.at("d_min").get<float>();
    m.config.d_max = arch.at("d_max").get<float>();
    m.config.kernel_size = arch.at("kernel_size").get<int>();
    m.layer_tags =
        manifest.at("layer_tags").get<std::vector<std::string>>();
    m.fixture_abs_rel = manifest.at("fixture_abs_rel").get<float>();
    m.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& [name, entry] : manifest.at("weights").items()) {
      auto file = entry.at("file").get<std::string>();
      auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4)
        throw std::runtime_error("model: weight " + name +
                                 " has a non-rank-4 shape in the manifest");
      Tensor t = read_gt01(dir / file);
      Shape want{dims[0], dims[1], dims[2], dims[3]};
      if (!(t.shape() == want))
        throw std::runtime_error("model: weight " + name + " file has shape " +
                                 t.shape().str() + ", manifest says " +
                                 want.str());
      m.weights.emplace(name, std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("model: manifest " + manifest_path.string() +
                             " is missing fields: " + e.what());
  }
  validate_weights(m);
  ArchPlan plan = plan_architecture(m.config);
  if (m.layer_tags != plan.layer_tags)
    throw std::runtime_error(
        "model: layer_tags in the manifest do not match the architecture");
  return m;
}

}  // namespace grumo
