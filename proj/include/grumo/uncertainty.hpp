#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "grumo/augment.hpp"
#include "grumo/model.hpp"
#include "grumo/resample.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

enum class Fusion { Max, Mean, Var };
enum class ChannelReduce { AbsMax, SignedMax };

inline int default_single_layer(int L) { return L - 3; }
inline std::vector<int> default_multi_layers(int L) {
  return {L - 4, L - 3, L - 2, L - 1};
}

/// Configuration of the gradient-to-score pipeline. Layer indices are
/// 1-based over the L decoder layers; `layers` non-empty selects multi-layer
/// mode, otherwise the single `layer` is used (defaulting to L-3).
struct GradConfig {
  Augmentation aug = Augmentation::hflip();
  std::optional<int> layer;
  std::vector<int> layers;
  Fusion fusion = Fusion::Max;
  float lambda = 2.0f;
  ChannelReduce channel_reduce = ChannelReduce::AbsMax;
};

/// Unitless pixel score in [0,1]; mask-false pixels carry 0 and are excluded
/// from metrics downstream.
struct UncertaintyMap {
  Tensor values;  // 1x1xHxW
  Mask valid;
};

inline std::vector<int> resolve_layers(const GradConfig& cfg, int L) {
  std::vector<int> layers;
  if (!cfg.layers.empty())
    layers = cfg.layers;
  else if (cfg.layer)
    layers = {*cfg.layer};
  else
    layers = {default_single_layer(L)};
  for (int i : layers)
    if (i < 1 || i > L)
      throw std::invalid_argument("layer index " + std::to_string(i) +
                                  " out of range; decoder has " +
                                  std::to_string(L) + " layers");
  if (layers.empty())
    throw std::invalid_argument("layer set must not be empty");
  return layers;
}

// --------------------------------------------------------------------------
// Reference depth

/// Predict on the augmented image and map the prediction back:
///   d_ref = invert(aug, f(apply(aug, x)).depth)
inline std::pair<Tensor, Mask> reference_depth(const Model& m,
                                               const Tensor& image,
                                               const Augmentation& aug) {
  if (aug.space() != AugSpace::Image)
    throw std::invalid_argument(
        "reference_depth: expected an image-space augmentation");
  Tensor aug_image = apply(aug, image);
  Tensor d_prime = forward(m, aug_image).depth;
  return invert(aug, d_prime);
}

/// Same, but transforming the encoder features: the bottleneck and every
/// skip tensor are transformed consistently, then decoded.
inline std::pair<Tensor, Mask> reference_depth_feature(const Model& m,
                                                       const Tensor& image,
                                                       const Augmentation& aug) {
  if (aug.space() != AugSpace::Feature)
    throw std::invalid_argument(
        "reference_depth_feature: expected a feature-space augmentation");
  FeatureBundle fb = encode(m, image);
  FeatureBundle transformed;
  Augmentation per = aug;
  transformed.bottleneck = apply(per, fb.bottleneck);
  for (std::size_t i = 0; i < fb.skips.size(); ++i) {
    per.seed = aug.seed + i + 1;  // independent noise per tensor
    transformed.skips.push_back(apply(per, fb.skips[i]));
  }
  Tensor d_prime = forward_from_features(m, transformed).depth;
  return invert(aug, d_prime);
}

// --------------------------------------------------------------------------
// Auxiliary loss

inline Tensor mask_to_tensor(const Mask& mask) {
  Tensor t({1, 1, mask.h, mask.w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = mask.on[i] ? 1.0f : 0.0f;
  return t;
}

/// Per-pixel squared inconsistency (d_hat - d_ref)^2, zeroed on mask-false
/// pixels before any summation so they contribute no gradient.
inline Tensor aux_loss_map(const Tensor& d_hat, const Tensor& d_ref,
                           const Mask& mask) {
  Tensor sq = zip_binary(d_hat, d_ref,
                         [](float a, float b) {
                           float d = a - b;
                           return d * d;
                         },
                         "aux_loss");
  return zip_binary(sq, mask_to_tensor(mask),
                    [](float v, float m) { return v * m; }, "aux_loss");
}

/// Per-pixel loss plus lambda * sigma_sq on mask-true pixels.
inline Tensor aux_loss_predictive_map(const Tensor& d_hat, const Tensor& d_ref,
                                      const Tensor& sigma_sq, float lambda,
                                      const Mask& mask) {
  if (sigma_sq.empty())
    throw std::invalid_argument("aux_loss_predictive: sigma_sq is missing");
  Tensor base = aux_loss_map(d_hat, d_ref, mask);
  if (lambda == 0.0f) return base;
  Tensor weighted = zip_binary(sigma_sq, mask_to_tensor(mask),
                               [lambda](float s, float m) {
                                 return lambda * s * m;
                               },
                               "aux_loss_predictive");
  return zip_binary(base, weighted, [](float a, float b) { return a + b; },
                    "aux_loss_predictive");
}

struct TapedLoss {
  NodeId per_pixel = -1;
  NodeId scalar = -1;
};

inline TapedLoss aux_loss_node(PredictionBundle& bundle, const Tensor& d_ref,
                               const Mask& mask) {
  if (!bundle.tape)
    throw std::invalid_argument("aux_loss: prediction was not traced");
  Tape& tape = *bundle.tape;
  NodeId ref = tape.leaf(d_ref);
  NodeId mk = tape.leaf(mask_to_tensor(mask));
  NodeId per_pixel = tape.mul(tape.square(tape.sub(bundle.depth_node, ref)), mk);
  return {per_pixel, tape.sum(per_pixel)};
}

/// lambda == 0 reduces exactly to aux_loss_node: the sigma branch is not
/// recorded at all, so maps and every downstream gradient match bitwise.
inline TapedLoss aux_loss_predictive_node(PredictionBundle& bundle,
                                          const Tensor& d_ref,
                                          const Mask& mask, float lambda) {
  if (!bundle.tape)
    throw std::invalid_argument(
        "aux_loss_predictive: prediction was not traced");
  if (bundle.sigma_node < 0)
    throw std::invalid_argument(
        "aux_loss_predictive: model does not predict a variance");
  if (lambda < 0.0f)
    throw std::invalid_argument("aux_loss_predictive: lambda must be >= 0");
  if (lambda == 0.0f) return aux_loss_node(bundle, d_ref, mask);
  Tape& tape = *bundle.tape;
  NodeId ref = tape.leaf(d_ref);
  NodeId mk = tape.leaf(mask_to_tensor(mask));
  NodeId sq = tape.mul(tape.square(tape.sub(bundle.depth_node, ref)), mk);
  NodeId var = tape.affine(tape.mul(bundle.sigma_node, mk), lambda, 0.0f);
  NodeId per_pixel = tape.add(sq, var);
  return {per_pixel, tape.sum(per_pixel)};
}

// --------------------------------------------------------------------------
// Gradient extraction and scoring

/// g_i = dL/da_i for each requested tag, with the activation's exact shape.
inline std::map<std::string, Tensor> extract_gradients(
    PredictionBundle& bundle, NodeId loss_scalar,
    const std::vector<std::string>& tags) {
  if (!bundle.tape)
    throw std::invalid_argument("extract_gradients: prediction was not traced");
  Tape& tape = *bundle.tape;
  for (const auto& t : tags)
    if (!tape.has_tag(t))
      throw std::invalid_argument("extract_gradients: no activation tagged '" +
                                  t + "'");
  tape.backward(loss_scalar);
  std::map<std::string, Tensor> out;
  for (const auto& t : tags) {
    NodeId id = tape.tagged(t);
    out.emplace(t, tape.has_grad(id)
                       ? tape.grad(id)
                       : Tensor(tape.value(id).shape()));
  }
  return out;
}

inline Tensor channel_reduce_map(const Tensor& g, ChannelReduce cr) {
  const Shape& s = g.shape();
  Tensor out({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        float best = cr == ChannelReduce::AbsMax
                         ? std::fabs(g.at(n, 0, y, x))
                         : g.at(n, 0, y, x);
        for (int c = 1; c < s.c; ++c) {
          float v = g.at(n, c, y, x);
          if (cr == ChannelReduce::AbsMax) v = std::fabs(v);
          best = std::max(best, v);
        }
        out.at(n, 0, y, x) = best;
      }
  return out;
}

/// Channel max-pool (of absolute values by default), bilinear upsample to the
/// output resolution, then self-normalisation to [0,1]; a constant map
/// degenerates to all-zeros.
inline UncertaintyMap layer_uncertainty(const Tensor& g, int out_h, int out_w,
                                        ChannelReduce cr = ChannelReduce::AbsMax) {
  const Shape& s = g.shape();
  if (s.n != 1)
    throw std::invalid_argument("layer_uncertainty: expected n=1, got " +
                                s.str());
  Tensor pooled = channel_reduce_map(g, cr);
  Tensor up = (pooled.shape().h == out_h && pooled.shape().w == out_w)
                  ? pooled
                  : bilinear_resize(pooled, out_h, out_w);
  return {normalize_unit_range(up), Mask::all(out_h, out_w, true)};
}

/// Pointwise MAX (default), MEAN, or population VAR across per-layer maps;
/// VAR is re-normalised to [0,1] afterwards.
inline UncertaintyMap fuse_multi(const std::vector<UncertaintyMap>& maps,
                                 Fusion fusion) {
  if (maps.empty())
    throw std::invalid_argument("fuse_multi: need at least one map");
  const Shape& s = maps[0].values.shape();
  for (const auto& m : maps)
    if (!(m.values.shape() == s))
      throw std::invalid_argument("fuse_multi: map shapes differ");
  UncertaintyMap out;
  out.valid = maps[0].valid;
  for (const auto& m : maps) out.valid = mask_and(out.valid, m.valid);
  Tensor fused(s);
  std::size_t k = maps.size();
  for (std::size_t i = 0; i < fused.size(); ++i) {
    switch (fusion) {
      case Fusion::Max: {
        float best = maps[0].values[i];
        for (std::size_t j = 1; j < k; ++j)
          best = std::max(best, maps[j].values[i]);
        fused[i] = best;
        break;
      }
      case Fusion::Mean: {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += maps[j].values[i];
        fused[i] = float(acc / double(k));
        break;
      }
      case Fusion::Var: {
        double mean = 0.0;
        for (std::size_t j = 0; j < k; ++j) mean += maps[j].values[i];
        mean /= double(k);
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          double d = double(maps[j].values[i]) - mean;
          acc += d * d;
        }
        fused[i] = float(acc / double(k));
        break;
      }
    }
  }
  out.values = fusion == Fusion::Var ? normalize_unit_range(fused)
                                     : std::move(fused);
  return out;
}

inline void apply_validity(UncertaintyMap& map) {
  for (std::size_t i = 0; i < map.values.size(); ++i)
    if (!map.valid.on[i]) map.values[i] = 0.0f;
}

// --------------------------------------------------------------------------
// Full pipeline

/// Predict, build the reference depth per cfg.aug, back-propagate the
/// auxiliary loss, score the selected decoder layers and fuse.
inline std::pair<Tensor, UncertaintyMap> estimate(const Model& m,
                                                  const Tensor& image,
                                                  const GradConfig& cfg) {
  if (image.shape().n != 1)
    throw std::invalid_argument("estimate: expected a single image");
  int L = m.decoder_layer_count();
  std::vector<int> layers = resolve_layers(cfg, L);
  if (cfg.lambda < 0.0f)
    throw std::invalid_argument("estimate: lambda must be >= 0");

  PredictionBundle bundle = forward(m, image, /*trace=*/true);
  auto [d_ref, mask] = cfg.aug.space() == AugSpace::Feature
                           ? reference_depth_feature(m, image, cfg.aug)
                           : reference_depth(m, image, cfg.aug);
  TapedLoss loss =
      (m.config.predictive && cfg.lambda > 0.0f)
          ? aux_loss_predictive_node(bundle, d_ref, mask, cfg.lambda)
          : aux_loss_node(bundle, d_ref, mask);

  std::vector<std::string> tags;
  for (int i : layers) tags.push_back("dec" + std::to_string(i));
  std::map<std::string, Tensor> grads =
      extract_gradients(bundle, loss.scalar, tags);

  int out_h = image.shape().h, out_w = image.shape().w;
  std::vector<UncertaintyMap> maps;
  for (const auto& t : tags)
    maps.push_back(
        layer_uncertainty(grads.at(t), out_h, out_w, cfg.channel_reduce));

  UncertaintyMap fused = maps.size() == 1 && cfg.layers.empty()
                             ? std::move(maps[0])
                             : fuse_multi(maps, cfg.fusion);
  fused.valid = mask;
  apply_validity(fused);
  return {bundle.depth, std::move(fused)};
}

}  // namespace grumo
