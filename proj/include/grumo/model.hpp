#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "grumo/autodiff.hpp"
#include "grumo/rng.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

constexpr float kLogVarClampLo = -10.0f;
constexpr float kLogVarClampHi = 10.0f;

struct ModelConfig {
  int input_channels = 3;
  int base_channels = 8;
  int encoder_stages = 3;   // each stage halves the resolution and doubles
                            // the channel count from base_channels
  int decoder_layers = 9;
  bool skip_connections = true;
  bool predictive = false;  // adds the log-variance head
  float d_min = 1.0f;
  float d_max = 10.0f;
  int kernel_size = 3;      // odd; 1 yields a width-blind, flip-equivariant net
};

struct ConvSpec {
  std::string name;        // weights stored as "<name>.w" / "<name>.b"
  int in_ch = 0, out_ch = 0;
  int stride = 1;
  bool upsample_before = false;
  int skip_concat = -1;    // 1-based encoder stage concatenated before the conv
  enum class Act { None, Relu, Elu } act = Act::None;
};

struct ArchPlan {
  std::vector<ConvSpec> encoder;
  std::vector<ConvSpec> decoder;
  ConvSpec head_depth;
  ConvSpec head_sigma;
  std::vector<std::string> layer_tags;  // "dec1" .. "decL"
};

inline void validate_config(const ModelConfig& cfg) {
  if (cfg.input_channels < 1 || cfg.base_channels < 1)
    throw std::invalid_argument("model config: channel counts must be >= 1");
  if (cfg.encoder_stages < 1)
    throw std::invalid_argument("model config: need at least 1 encoder stage");
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
    throw std::invalid_argument("model config: kernel size must be odd");
  if (!(cfg.d_min > 0.0f) || !(cfg.d_max > cfg.d_min))
    throw std::invalid_argument("model config: need 0 < d_min < d_max");
  if (cfg.decoder_layers < 5)
    throw std::invalid_argument(
        "model config: need at least 5 decoder layers");
  int structural = cfg.skip_connections ? 2 * cfg.encoder_stages
                                        : cfg.encoder_stages + 1;
  if (cfg.decoder_layers < structural)
    throw std::invalid_argument(
        "model config: " + std::to_string(cfg.encoder_stages) +
        " encoder stages need at least " + std::to_string(structural) +
        " decoder layers, got " + std::to_string(cfg.decoder_layers));
}

inline ArchPlan plan_architecture(const ModelConfig& cfg) {
  validate_config(cfg);
  ArchPlan plan;
  int ch = cfg.input_channels;
  for (int i = 1; i <= cfg.encoder_stages; ++i) {
    int out = cfg.base_channels << (i - 1);
    plan.encoder.push_back({"enc" + std::to_string(i), ch, out, 2, false, -1,
                            ConvSpec::Act::Relu});
    ch = out;
  }
  int idx = 1;
  auto add = [&](ConvSpec s) {
    s.name = "dec" + std::to_string(idx++);
    s.act = ConvSpec::Act::Elu;
    plan.decoder.push_back(s);
  };
  add({"", ch, ch, 1, false, -1});  // refinement at the bottleneck
  for (int s = 1; s <= cfg.encoder_stages; ++s) {
    int enc_stage = cfg.encoder_stages - s;  // stage whose resolution we reach
    int out = enc_stage >= 1 ? (cfg.base_channels << (enc_stage - 1))
                             : cfg.base_channels;
    add({"", ch, out, 1, true, -1});
    ch = out;
    if (cfg.skip_connections && enc_stage >= 1)
      add({"", 2 * out, out, 1, false, enc_stage});
  }
  while (idx <= cfg.decoder_layers) add({"", ch, ch, 1, false, -1});
  for (const auto& d : plan.decoder) plan.layer_tags.push_back(d.name);
  plan.head_depth = {"head_depth", ch, 1, 1, false, -1, ConvSpec::Act::None};
  plan.head_sigma = {"head_sigma", ch, 1, 1, false, -1, ConvSpec::Act::None};
  return plan;
}

/// Immutable weight set + architecture descriptor. Safe to share across
/// threads once constructed; every forward owns a private tape.
struct Model {
  ModelConfig config;
  std::map<std::string, Tensor> weights;
  std::vector<std::string> layer_tags;
  float fixture_abs_rel = -1.0f;  // recorded by fixture training; <0 = unset
  std::uint64_t seed = 0;

  int decoder_layer_count() const { return config.decoder_layers; }
};

inline Shape conv_weight_shape(const ConvSpec& spec, int k) {
  return {spec.out_ch, spec.in_ch, k, k};
}

inline void validate_weights(const Model& m) {
  ArchPlan plan = plan_architecture(m.config);
  int k = m.config.kernel_size;
  auto expect = [&](const ConvSpec& spec) {
    auto wit = m.weights.find(spec.name + ".w");
    if (wit == m.weights.end())
      throw std::runtime_error("model: missing weight " + spec.name + ".w");
    if (!(wit->second.shape() == conv_weight_shape(spec, k)))
      throw std::runtime_error(
          "model: weight " + spec.name + ".w has shape " +
          wit->second.shape().str() + ", descriptor implies " +
          conv_weight_shape(spec, k).str());
    auto bit = m.weights.find(spec.name + ".b");
    if (bit == m.weights.end())
      throw std::runtime_error("model: missing weight " + spec.name + ".b");
    Shape want{1, spec.out_ch, 1, 1};
    if (!(bit->second.shape() == want))
      throw std::runtime_error("model: weight " + spec.name +
                               ".b has shape " + bit->second.shape().str() +
                               ", descriptor implies " + want.str());
  };
  for (const auto& e : plan.encoder) expect(e);
  for (const auto& d : plan.decoder) expect(d);
  expect(plan.head_depth);
  if (m.config.predictive) expect(plan.head_sigma);
}

/// Encoder bottleneck plus the skip tensors the decoder consumes
/// (skips[i] is the output of encoder stage i+1; empty when skips are off).
struct FeatureBundle {
  Tensor bottleneck;
  std::vector<Tensor> skips;
};

struct PredictionBundle {
  Tensor depth;                      // 1x1xHxW, metric
  std::optional<Tensor> sigma_sq;    // predictive models only
  std::map<std::string, Tensor> activations;
  std::shared_ptr<Tape> tape;        // retained only for traced forwards
  NodeId depth_node = -1;
  NodeId sigma_node = -1;            // sigma_sq node (post exp)
  NodeId log_var_node = -1;          // clamped log-variance node
  std::vector<NodeId> layer_nodes;
};

struct DropoutSpec {
  float p = 0.0f;
  std::uint64_t seed = 0;
};

namespace detail {

struct ForwardTrace {
  std::shared_ptr<Tape> tape;
  std::vector<NodeId> encoder_nodes;
  NodeId depth = -1;
  NodeId sigma_sq = -1;
  NodeId log_var = -1;
  std::vector<NodeId> layer_nodes;
  std::map<std::string, NodeId> weight_nodes;
};

inline NodeId taped_conv(const Model& m, Tape& tape, ForwardTrace& tr,
                         const ConvSpec& spec, NodeId input) {
  int k = m.config.kernel_size;
  NodeId w = tape.leaf(m.weights.at(spec.name + ".w"));
  NodeId b = tape.leaf(m.weights.at(spec.name + ".b"));
  tr.weight_nodes[spec.name + ".w"] = w;
  tr.weight_nodes[spec.name + ".b"] = b;
  NodeId out = tape.conv2d(input, w, b, spec.stride, (k - 1) / 2);
  switch (spec.act) {
    case ConvSpec::Act::Relu:
      return tape.relu(out);
    case ConvSpec::Act::Elu:
      return tape.elu(out);
    case ConvSpec::Act::None:
      return out;
  }
  return out;
}

inline Tensor bernoulli_keep_mask(const Shape& s, float p, SplitMix64& rng) {
  Tensor mask(s);
  float scale = 1.0f / (1.0f - p);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < double(1.0f - p) ? scale : 0.0f;
  return mask;
}

inline void run_decoder(const Model& m, Tape& tape, ForwardTrace& tr,
                        NodeId bottleneck, const std::vector<NodeId>& skips,
                        const DropoutSpec* drop) {
  ArchPlan plan = plan_architecture(m.config);
  SplitMix64 drop_rng(drop ? drop->seed : 0);
  NodeId cur = bottleneck;
  for (std::size_t i = 0; i < plan.decoder.size(); ++i) {
    const ConvSpec& spec = plan.decoder[i];
    if (spec.upsample_before) cur = tape.upsample2x(cur);
    if (spec.skip_concat >= 1) {
      if (std::size_t(spec.skip_concat) > skips.size())
        throw std::invalid_argument("decoder: missing skip tensor for stage " +
                                    std::to_string(spec.skip_concat));
      cur = tape.concat_c(cur, skips[spec.skip_concat - 1]);
    }
    cur = taped_conv(m, tape, tr, spec, cur);
    if (drop && drop->p > 0.0f) {
      Tensor mask = bernoulli_keep_mask(tape.value(cur).shape(), drop->p,
                                        drop_rng);
      cur = tape.mul(cur, tape.leaf(std::move(mask)));
    }
    tape.tag(plan.layer_tags[i], cur);
    tr.layer_nodes.push_back(cur);
  }
  NodeId head = taped_conv(m, tape, tr, plan.head_depth, cur);
  NodeId sig = tape.sigmoid(head);
  tr.depth =
      tape.affine(sig, m.config.d_max - m.config.d_min, m.config.d_min);
  if (m.config.predictive) {
    NodeId raw = taped_conv(m, tape, tr, plan.head_sigma, cur);
    tr.log_var = tape.clamp(raw, kLogVarClampLo, kLogVarClampHi);
    tr.sigma_sq = tape.exp(tr.log_var);
  }
}

inline ForwardTrace run_forward(const Model& m, const Tensor& image,
                                const DropoutSpec* drop) {
  const Shape& s = image.shape();
  if (s.c != m.config.input_channels)
    throw std::invalid_argument(
        "forward: image " + s.str() + " has " + std::to_string(s.c) +
        " channels, model expects " +
        std::to_string(m.config.input_channels));
  int divisor = 1 << m.config.encoder_stages;
  if (s.h % divisor != 0 || s.w % divisor != 0)
    throw std::invalid_argument(
        "forward: spatial size " + std::to_string(s.h) + "x" +
        std::to_string(s.w) + " must be divisible by " +
        std::to_string(divisor));
  ForwardTrace tr;
  tr.tape = std::make_shared<Tape>();
  Tape& tape = *tr.tape;
  ArchPlan plan = plan_architecture(m.config);
  NodeId cur = tape.leaf(image);
  for (const auto& spec : plan.encoder) {
    cur = taped_conv(m, tape, tr, spec, cur);
    tr.encoder_nodes.push_back(cur);
  }
  std::vector<NodeId> skips;
  if (m.config.skip_connections)
    skips.assign(tr.encoder_nodes.begin(), tr.encoder_nodes.end() - 1);
  run_decoder(m, tape, tr, cur, skips, drop);
  return tr;
}

inline ForwardTrace run_from_features(const Model& m, const FeatureBundle& fb,
                                      const DropoutSpec* drop) {
  ArchPlan plan = plan_architecture(m.config);
  const ConvSpec& last_enc = plan.encoder.back();
  const Shape& bs = fb.bottleneck.shape();
  if (bs.c != last_enc.out_ch)
    throw std::invalid_argument(
        "features: bottleneck " + bs.str() + " has " + std::to_string(bs.c) +
        " channels, decoder expects " + std::to_string(last_enc.out_ch));
  std::size_t want_skips =
      m.config.skip_connections ? std::size_t(m.config.encoder_stages - 1) : 0;
  if (fb.skips.size() != want_skips)
    throw std::invalid_argument(
        "features: expected " + std::to_string(want_skips) +
        " skip tensors, got " + std::to_string(fb.skips.size()));
  for (std::size_t i = 0; i < fb.skips.size(); ++i) {
    const Shape& ss = fb.skips[i].shape();
    int want_c = m.config.base_channels << i;
    int scale = 1 << int(m.config.encoder_stages - 1 - i);
    if (ss.c != want_c || ss.h != bs.h * scale || ss.w != bs.w * scale)
      throw std::invalid_argument("features: skip " + std::to_string(i + 1) +
                                  " has shape " + ss.str());
  }
  ForwardTrace tr;
  tr.tape = std::make_shared<Tape>();
  Tape& tape = *tr.tape;
  NodeId bottleneck = tape.leaf(fb.bottleneck);
  std::vector<NodeId> skips;
  for (const auto& skip : fb.skips) skips.push_back(tape.leaf(skip));
  run_decoder(m, tape, tr, bottleneck, skips, drop);
  return tr;
}

inline PredictionBundle bundle_from(ForwardTrace&& tr, bool trace) {
  PredictionBundle out;
  Tape& tape = *tr.tape;
  out.depth = tape.value(tr.depth);
  if (tr.sigma_sq >= 0) out.sigma_sq = tape.value(tr.sigma_sq);
  if (trace) {
    for (const auto& [name, id] : tape.tags())
      out.activations.emplace(name, tape.value(id));
    out.tape = tr.tape;
    out.depth_node = tr.depth;
    out.sigma_node = tr.sigma_sq;
    out.log_var_node = tr.log_var;
    out.layer_nodes = tr.layer_nodes;
  }
  return out;
}

}  // namespace detail

inline FeatureBundle encode(const Model& m, const Tensor& image) {
  detail::ForwardTrace tr = detail::run_forward(m, image, nullptr);
  FeatureBundle fb;
  fb.bottleneck = tr.tape->value(tr.encoder_nodes.back());
  if (m.config.skip_connections)
    for (std::size_t i = 0; i + 1 < tr.encoder_nodes.size(); ++i)
      fb.skips.push_back(tr.tape->value(tr.encoder_nodes[i]));
  return fb;
}

/// d = d_min + sigmoid(head) * (d_max - d_min); predictive models also emit
/// sigma_sq = exp(clamp(log-variance head, -10, 10)). With trace, all L
/// decoder activations are tagged "dec1".."decL" and the tape is retained.
inline PredictionBundle forward(const Model& m, const Tensor& image,
                                bool trace = false) {
  return detail::bundle_from(detail::run_forward(m, image, nullptr), trace);
}

/// Decoder-only forward from (possibly transformed) encoder features;
/// identical decoder semantics as forward().
inline PredictionBundle forward_from_features(const Model& m,
                                              const FeatureBundle& fb,
                                              bool trace = false) {
  return detail::bundle_from(detail::run_from_features(m, fb, nullptr),
                             trace);
}

/// Forward with Bernoulli(1-p) keep masks (scaled 1/(1-p)) applied to every
/// decoder block activation; deterministic given the seed.
inline PredictionBundle forward_dropout(const Model& m, const Tensor& image,
                                        float p, std::uint64_t seed) {
  if (p < 0.0f || p >= 1.0f)
    throw std::invalid_argument("dropout: p must lie in [0, 1)");
  DropoutSpec drop{p, seed};
  return detail::bundle_from(detail::run_forward(m, image, &drop), false);
}

}  // namespace grumo
