#pragma once

#include <cmath>
#include <vector>

#include "grumo/augment.hpp"
#include "grumo/model.hpp"
#include "grumo/uncertainty.hpp"

namespace grumo {

// Output-only comparison methods. All scores are self-normalised to [0,1]
// with the same degenerate-range-to-zeros rule as the gradient pipeline.

/// Population (not sample) variance, accumulated in 64-bit.
inline double population_variance(std::span<const double> vals) {
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  double acc = 0.0;
  for (double v : vals) {
    double d = v - mean;
    acc += d * d;
  }
  return acc / double(vals.size());
}

/// Flip-consistency residual |d_hat - invert(hflip, f(hflip(x)))|.
inline UncertaintyMap post_uncertainty(const Model& m, const Tensor& image) {
  Tensor d_hat = forward(m, image).depth;
  auto [d_ref, mask] = reference_depth(m, image, Augmentation::hflip());
  Tensor residual = zip_binary(
      d_hat, d_ref, [](float a, float b) { return std::fabs(a - b); },
      "post");
  UncertaintyMap out{normalize_unit_range(residual), mask};
  apply_validity(out);
  return out;
}

/// Defaults per the reference protocol: flip, grey, rotation (smallest
/// angle, least masking) and noise.
inline std::vector<Augmentation> default_var_augs() {
  return {Augmentation::hflip(), Augmentation::gray(),
          Augmentation::rotate(5.0f),
          Augmentation::noise(kDefaultImageNoiseStd, 1)};
}

/// Per-pixel population variance over the prediction and each augmented
/// reference depth. A pixel invalid under any augmentation is masked out;
/// normalisation runs over the jointly valid pixels only.
inline UncertaintyMap var_uncertainty(const Model& m, const Tensor& image,
                                      const std::vector<Augmentation>& augs) {
  if (augs.empty())
    throw std::invalid_argument("var: need at least one augmentation");
  for (const auto& aug : augs)
    if (aug.space() != AugSpace::Image)
      throw std::invalid_argument(
          "var: feature-space augmentations are not usable here");
  Tensor d_hat = forward(m, image).depth;
  const Shape& s = d_hat.shape();
  std::vector<Tensor> preds{d_hat};
  Mask joint = Mask::all(s.h, s.w, true);
  for (const auto& aug : augs) {
    auto [d_ref, mask] = reference_depth(m, image, aug);
    preds.push_back(std::move(d_ref));
    joint = mask_and(joint, mask);
  }
  Tensor var(s);
  std::vector<double> vals(preds.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    if (!joint.on[i]) continue;
    for (std::size_t j = 0; j < preds.size(); ++j) vals[j] = preds[j][i];
    var[i] = float(population_variance(vals));
  }
  // Normalise over valid pixels; invalid ones carry 0.
  float lo = 0.0f, hi = 0.0f;
  bool first = true;
  for (std::size_t i = 0; i < var.size(); ++i) {
    if (!joint.on[i]) continue;
    if (first) {
      lo = hi = var[i];
      first = false;
    } else {
      lo = std::min(lo, var[i]);
      hi = std::max(hi, var[i]);
    }
  }
  UncertaintyMap out;
  out.valid = joint;
  out.values = Tensor(s);
  if (hi > lo) {
    float range = hi - lo;
    for (std::size_t i = 0; i < var.size(); ++i)
      if (joint.on[i]) out.values[i] = (var[i] - lo) / range;
  }
  return out;
}

/// Variance over n stochastic forwards with inference-only dropout on the
/// decoder block activations. Deterministic given the seed; sample j uses
/// seed + j.
inline UncertaintyMap dropstar_uncertainty(const Model& m, const Tensor& image,
                                           int n, float p,
                                           std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("dropstar: need n >= 2 samples");
  if (p < 0.0f || p >= 1.0f)
    throw std::invalid_argument("dropstar: p must lie in [0, 1)");
  std::vector<Tensor> samples;
  samples.reserve(n);
  for (int j = 0; j < n; ++j)
    samples.push_back(
        forward_dropout(m, image, p, seed + std::uint64_t(j)).depth);
  const Shape& s = samples[0].shape();
  Tensor var(s);
  std::vector<double> vals(samples.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    for (std::size_t j = 0; j < samples.size(); ++j) vals[j] = samples[j][i];
    var[i] = float(population_variance(vals));
  }
  return {normalize_unit_range(var), Mask::all(s.h, s.w, true)};
}

/// The predictive model's own variance map, self-normalised.
inline UncertaintyMap sigma_uncertainty(const PredictionBundle& bundle) {
  if (!bundle.sigma_sq)
    throw std::invalid_argument(
        "sigma: model does not predict a variance (regular variant)");
  const Shape& s = bundle.sigma_sq->shape();
  return {normalize_unit_range(*bundle.sigma_sq), Mask::all(s.h, s.w, true)};
}

}  // namespace grumo
