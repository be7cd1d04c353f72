#pragma once

#include <string>
#include <vector>

#include "grumo/baselines.hpp"
#include "grumo/model.hpp"
#include "grumo/uncertainty.hpp"

namespace grumo {

/// A parsed method spec:
///   ours | ours-feat | ours-multi | post | var:<aug,aug,...> |
///   dropstar:<n>:<p>:<seed> | sigma
/// `ours` reads gradients from a single decoder layer with the image flipped,
/// `ours-feat` flips the encoder features instead, and `ours-multi` fuses the
/// last four layers before the final one with a pointwise MAX.
struct MethodSpec {
  enum class Kind { Ours, OursFeat, OursMulti, Post, Var, DropStar, Sigma };
  Kind kind = Kind::Ours;
  std::string spec_string = "ours";
  GradConfig grad;
  std::vector<Augmentation> var_augs;
  int drop_n = 8;
  float drop_p = 0.2f;
  std::uint64_t drop_seed = 1;
};

inline MethodSpec parse_method(const std::string& spec) {
  MethodSpec m;
  m.spec_string = spec;
  if (spec == "ours") {
    m.kind = MethodSpec::Kind::Ours;
    m.grad.aug = Augmentation::hflip();
    return m;
  }
  if (spec == "ours-feat") {
    m.kind = MethodSpec::Kind::OursFeat;
    m.grad.aug = Augmentation::feat_hflip();
    return m;
  }
  if (spec == "ours-multi") {
    m.kind = MethodSpec::Kind::OursMulti;
    m.grad.aug = Augmentation::hflip();
    m.grad.fusion = Fusion::Max;
    return m;
  }
  if (spec == "post") {
    m.kind = MethodSpec::Kind::Post;
    return m;
  }
  if (spec == "sigma") {
    m.kind = MethodSpec::Kind::Sigma;
    return m;
  }
  if (spec == "var" || spec.rfind("var:", 0) == 0) {
    m.kind = MethodSpec::Kind::Var;
    if (spec == "var") {
      m.var_augs = default_var_augs();
    } else {
      std::string rest = spec.substr(4);
      std::size_t pos = 0;
      while (pos <= rest.size()) {
        std::size_t next = rest.find(',', pos);
        std::string one = next == std::string::npos
                              ? rest.substr(pos)
                              : rest.substr(pos, next - pos);
        if (one.empty())
          throw std::invalid_argument("method '" + spec +
                                      "': empty augmentation in list");
        m.var_augs.push_back(parse_augmentation(one));
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      if (m.var_augs.empty())
        throw std::invalid_argument("method '" + spec +
                                    "': needs at least one augmentation");
    }
    return m;
  }
  if (spec == "dropstar" || spec.rfind("dropstar:", 0) == 0) {
    m.kind = MethodSpec::Kind::DropStar;
    if (spec != "dropstar") {
      std::vector<std::string> parts;
      std::size_t pos = 9;
      while (pos <= spec.size()) {
        std::size_t next = spec.find(':', pos);
        parts.push_back(next == std::string::npos
                            ? spec.substr(pos)
                            : spec.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      try {
        if (parts.size() > 0) m.drop_n = std::stoi(parts[0]);
        if (parts.size() > 1) m.drop_p = std::stof(parts[1]);
        if (parts.size() > 2) m.drop_seed = std::stoull(parts[2]);
        if (parts.size() > 3) throw std::invalid_argument("extra parameters");
      } catch (const std::exception&) {
        throw std::invalid_argument("method '" + spec +
                                    "': expected dropstar:<n>:<p>:<seed>");
      }
    }
    return m;
  }
  throw std::invalid_argument("unknown method '" + spec + "'");
}

inline bool is_ours(const MethodSpec& m) {
  return m.kind == MethodSpec::Kind::Ours ||
         m.kind == MethodSpec::Kind::OursFeat ||
         m.kind == MethodSpec::Kind::OursMulti;
}

/// Fills layer defaults for the model at hand: single mode uses layer L-3,
/// multi mode the last four layers excluding the final one.
inline GradConfig resolved_grad_config(const MethodSpec& m, int L) {
  GradConfig cfg = m.grad;
  if (m.kind == MethodSpec::Kind::OursMulti) {
    if (cfg.layers.empty()) cfg.layers = default_multi_layers(L);
  } else if (!cfg.layer && cfg.layers.empty()) {
    cfg.layer = default_single_layer(L);
  }
  return cfg;
}

struct MethodOutput {
  Tensor depth;
  UncertaintyMap uncert;
};

inline MethodOutput run_method(const MethodSpec& m, const Model& model,
                               const Tensor& image) {
  switch (m.kind) {
    case MethodSpec::Kind::Ours:
    case MethodSpec::Kind::OursFeat:
    case MethodSpec::Kind::OursMulti: {
      auto [depth, uncert] =
          estimate(model, image, resolved_grad_config(m, model.decoder_layer_count()));
      return {std::move(depth), std::move(uncert)};
    }
    case MethodSpec::Kind::Post: {
      Tensor depth = forward(model, image).depth;
      return {std::move(depth), post_uncertainty(model, image)};
    }
    case MethodSpec::Kind::Var: {
      Tensor depth = forward(model, image).depth;
      return {std::move(depth), var_uncertainty(model, image, m.var_augs)};
    }
    case MethodSpec::Kind::DropStar: {
      Tensor depth = forward(model, image).depth;
      return {std::move(depth), dropstar_uncertainty(model, image, m.drop_n,
                                                     m.drop_p, m.drop_seed)};
    }
    case MethodSpec::Kind::Sigma: {
      PredictionBundle bundle = forward(model, image);
      UncertaintyMap u = sigma_uncertainty(bundle);
      return {std::move(bundle.depth), std::move(u)};
    }
  }
  throw std::logic_error("run_method: unknown kind");
}

}  // namespace grumo
