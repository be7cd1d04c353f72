#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "grumo/autodiff.hpp"
#include "grumo/tensor.hpp"

namespace grumo {

/// Central finite differences, element by element:
///   g_j = (f(x + eps e_j) - f(x - eps e_j)) / (2 eps)
/// Test oracle only; evaluates f as a black box and never touches backward().
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, float eps) {
  if (!(eps > 0.0f))
    throw std::invalid_argument("finite_diff_grad: eps must be > 0");
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t j = 0; j < x.size(); ++j) {
    float orig = probe[j];
    float xp = orig + eps;
    float xm = orig - eps;
    probe[j] = xp;
    double fp = f(probe);
    probe[j] = xm;
    double fm = f(probe);
    probe[j] = orig;
    // Divide by the step that was actually realised after float rounding.
    g[j] = float((fp - fm) / (double(xp) - double(xm)));
  }
  return g;
}

/// Node ids whose values feed a relu somewhere on the tape.
inline std::set<NodeId> relu_input_ids(const Tape& tape) {
  std::set<NodeId> ids;
  for (NodeId id = 0; std::size_t(id) < tape.node_count(); ++id)
    if (tape.op(id) == Op::Relu) ids.insert(tape.inputs(id)[0]);
  return ids;
}

struct FdProbe {
  double fd = 0.0;
  // Set when an influenced relu preactivation sits within `relu_guard` of
  // zero, so the +/- replays may straddle the kink and the central
  // difference is unreliable at this element.
  bool kink_contaminated = false;
};

/// Finite difference of a taped reduction w.r.t. one element of an
/// intermediate (or leaf) node, via subgraph replay with the perturbed
/// value. Independent of backward().
inline FdProbe fd_probe(const Tape& tape, NodeId node, std::size_t elem,
                        NodeId loss, float eps,
                        const std::set<NodeId>& relu_inputs,
                        float relu_guard = 1e-2f) {
  Tensor plus = tape.value(node);
  Tensor minus = plus;
  plus[elem] += eps;
  minus[elem] -= eps;
  std::map<NodeId, Tensor> rp, rm;
  double fp = tape.eval_with_override(node, plus, loss, &rp);
  double fm = tape.eval_with_override(node, minus, loss, &rm);

  FdProbe out;
  out.fd = (fp - fm) / (double(plus[elem]) - double(minus[elem]));
  for (auto& [id, vplus] : rp) {
    if (!relu_inputs.count(id)) continue;
    auto it = rm.find(id);
    const Tensor& vminus = it != rm.end() ? it->second : tape.value(id);
    const Tensor& base = tape.value(id);
    for (std::size_t j = 0; j < vplus.size(); ++j) {
      if (vplus[j] == vminus[j]) continue;  // perturbation never reached it
      if (std::fabs(base[j]) <= relu_guard) {
        out.kink_contaminated = true;
        return out;
      }
    }
  }
  return out;
}

inline FdProbe fd_probe(const Tape& tape, NodeId node, std::size_t elem,
                        NodeId loss, float eps) {
  return fd_probe(tape, node, elem, loss, eps, relu_input_ids(tape));
}

}  // namespace grumo
