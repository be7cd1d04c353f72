#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "grumo/tensor.hpp"

namespace grumo {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  Leaf,
  Conv2d,     // in0 = x, in1 = weight (co,ci,kh,kw), in2 = bias (1,co,1,1)
  Relu,
  Elu,
  Sigmoid,
  Square,
  Exp,
  Clamp,      // pass-through gradient inside [a, b], zero outside
  Affine,     // a * x + b
  Add,
  Sub,
  Mul,
  ConcatC,
  Upsample2x, // nearest neighbour
  Sum,        // full reduction to a 1x1x1x1 scalar, accumulated in 64-bit
};

/// Reverse-mode tape over eagerly stored activations. Node ids are assigned
/// in construction order, so they are already topologically sorted; backward
/// is a single reverse sweep. A tape is confined to one thread.
class Tape {
 public:
  NodeId leaf(Tensor v) { return push(Op::Leaf, std::move(v), -1, -1, -1); }

  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad) {
    check(x);
    check(w);
    check(b);
    Node node;
    node.op = Op::Conv2d;
    node.in = {x, w, b};
    node.stride = stride;
    node.pad = pad;
    node.value = compute(node);
    return store(std::move(node));
  }

  NodeId relu(NodeId x) { return unary(Op::Relu, x); }
  NodeId elu(NodeId x) { return unary(Op::Elu, x); }
  NodeId sigmoid(NodeId x) { return unary(Op::Sigmoid, x); }
  NodeId square(NodeId x) { return unary(Op::Square, x); }
  NodeId exp(NodeId x) { return unary(Op::Exp, x); }

  NodeId clamp(NodeId x, float lo, float hi) {
    check(x);
    Node node;
    node.op = Op::Clamp;
    node.in = {x, -1, -1};
    node.a = lo;
    node.b = hi;
    node.value = compute(node);
    return store(std::move(node));
  }

  NodeId affine(NodeId x, float scale, float shift) {
    check(x);
    Node node;
    node.op = Op::Affine;
    node.in = {x, -1, -1};
    node.a = scale;
    node.b = shift;
    node.value = compute(node);
    return store(std::move(node));
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }
  NodeId concat_c(NodeId a, NodeId b) { return binary(Op::ConcatC, a, b); }

  NodeId upsample2x(NodeId x) { return unary(Op::Upsample2x, x); }

  NodeId sum(NodeId x) { return unary(Op::Sum, x); }

  std::size_t node_count() const { return nodes_.size(); }

  Op op(NodeId id) const {
    check(id);
    return nodes_[id].op;
  }

  std::array<NodeId, 3> inputs(NodeId id) const {
    check(id);
    return nodes_[id].in;
  }

  const Tensor& value(NodeId id) const {
    check(id);
    return nodes_[id].value;
  }

  /// 64-bit accumulated value of a Sum node (the f32 tensor value is this
  /// rounded once).
  double scalar(NodeId id) const {
    check(id);
    if (nodes_[id].op != Op::Sum)
      throw std::invalid_argument("tape: node is not a reduction");
    return nodes_[id].scalar;
  }

  void tag(const std::string& name, NodeId id) {
    check(id);
    auto [it, fresh] = tags_.emplace(name, id);
    if (!fresh)
      throw std::invalid_argument("tape: tag '" + name + "' already bound");
  }
  bool has_tag(const std::string& name) const { return tags_.count(name); }
  NodeId tagged(const std::string& name) const {
    auto it = tags_.find(name);
    if (it == tags_.end())
      throw std::invalid_argument("tape: no node tagged '" + name + "'");
    return it->second;
  }
  const std::map<std::string, NodeId>& tags() const { return tags_; }

  /// Reverse sweep from `loss`. Gradients of every node reachable from the
  /// loss are retained and can be queried afterwards.
  void backward(NodeId loss) {
    if (loss < 0 || std::size_t(loss) >= nodes_.size())
      throw std::invalid_argument("tape: loss node is not on this tape");
    const Node& l = nodes_[loss];
    if (l.op != Op::Sum && l.value.size() != 1)
      throw std::invalid_argument(
          "tape: loss must be scalar or a sum-reduced node, got shape " +
          l.value.shape().str());
    grads_.assign(nodes_.size(), Tensor());
    grads_[loss] = Tensor::full(l.value.shape(), 1.0f);
    for (NodeId id = loss; id >= 0; --id) {
      if (grads_[id].empty()) continue;
      propagate(id);
    }
    has_grads_ = true;
  }

  bool has_grad(NodeId id) const {
    return has_grads_ && id >= 0 && std::size_t(id) < grads_.size() &&
           !grads_[id].empty();
  }

  const Tensor& grad(NodeId id) const {
    check(id);
    if (!has_grads_)
      throw std::logic_error("tape: backward has not been run");
    if (grads_[id].empty())
      throw std::logic_error("tape: node has no gradient (not reachable)");
    return grads_[id];
  }

  const Tensor& grad(const std::string& name) const {
    return grad(tagged(name));
  }

  /// Recomputes the subgraph between `node` (with its value replaced) and
  /// `target` without touching recorded state; returns the 64-bit value of
  /// the target reduction. `recomputed`, when given, receives every value
  /// that changed. This is the replay primitive behind the finite-difference
  /// oracles and is independent of backward().
  double eval_with_override(NodeId node, const Tensor& replacement,
                            NodeId target,
                            std::map<NodeId, Tensor>* recomputed = nullptr) const {
    check(node);
    check(target);
    if (target < node)
      throw std::invalid_argument("tape: target precedes overridden node");
    if (!(replacement.shape() == nodes_[node].value.shape()))
      throw std::invalid_argument("tape: override shape " +
                                  replacement.shape().str() +
                                  " does not match node shape " +
                                  nodes_[node].value.shape().str());
    if (nodes_[target].op != Op::Sum)
      throw std::invalid_argument("tape: replay target must be a reduction");
    std::map<NodeId, Tensor> local;
    std::map<NodeId, Tensor>& changed = recomputed ? *recomputed : local;
    changed.clear();
    changed.emplace(node, replacement);
    double target_scalar = 0.0;
    for (NodeId id = node + 1; id <= target; ++id) {
      const Node& n = nodes_[id];
      bool touched = false;
      for (NodeId in : n.in)
        if (in >= 0 && changed.count(in)) touched = true;
      if (!touched) continue;
      auto pick = [&](NodeId in) -> const Tensor* {
        if (in < 0) return nullptr;
        auto it = changed.find(in);
        return it != changed.end() ? &it->second : &nodes_[in].value;
      };
      double s = 0.0;
      Tensor v = compute_with(n, pick(n.in[0]), pick(n.in[1]), pick(n.in[2]), &s);
      if (id == target) target_scalar = s;
      changed.emplace(id, std::move(v));
    }
    if (!changed.count(target)) return nodes_[target].scalar;
    return target_scalar;
  }

  /// Recomputes a node's value from the stored leaves (no overrides); used to
  /// verify that replaying the tape reproduces recorded activations.
  Tensor replay_value(NodeId target) const {
    check(target);
    std::vector<Tensor> vals(target + 1);
    for (NodeId id = 0; id <= target; ++id) {
      const Node& n = nodes_[id];
      if (n.op == Op::Leaf) {
        vals[id] = n.value;
        continue;
      }
      auto pick = [&](NodeId in) -> const Tensor* {
        return in < 0 ? nullptr : &vals[in];
      };
      double s = 0.0;
      vals[id] = compute_with(n, pick(n.in[0]), pick(n.in[1]), pick(n.in[2]), &s);
    }
    return vals[target];
  }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::array<NodeId, 3> in{{-1, -1, -1}};
    Tensor value;
    double scalar = 0.0;  // Sum nodes only
    float a = 0.0f, b = 0.0f;
    int stride = 1, pad = 0;
  };

  void check(NodeId id) const {
    if (id < 0 || std::size_t(id) >= nodes_.size())
      throw std::invalid_argument("tape: node id " + std::to_string(id) +
                                  " is not on this tape");
  }

  NodeId unary(Op op, NodeId x) {
    check(x);
    Node node;
    node.op = op;
    node.in = {x, -1, -1};
    node.value = compute(node);
    return store(std::move(node));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    check(a);
    check(b);
    Node node;
    node.op = op;
    node.in = {a, b, -1};
    node.value = compute(node);
    return store(std::move(node));
  }

  NodeId push(Op op, Tensor v, NodeId a, NodeId b, NodeId c) {
    Node node;
    node.op = op;
    node.in = {a, b, c};
    node.value = std::move(v);
    return store(std::move(node));
  }

  NodeId store(Node&& node) {
    nodes_.push_back(std::move(node));
    has_grads_ = false;
    return NodeId(nodes_.size() - 1);
  }

  Tensor compute(Node& node) {
    auto at = [&](int k) -> const Tensor* {
      return node.in[k] < 0 ? nullptr : &nodes_[node.in[k]].value;
    };
    double s = 0.0;
    Tensor v = compute_with(node, at(0), at(1), at(2), &s);
    node.scalar = s;
    return v;
  }

  Tensor compute_with(const Node& node, const Tensor* i0, const Tensor* i1,
                      const Tensor* i2, double* scalar_out) const {
    switch (node.op) {
      case Op::Leaf:
        return node.value;
      case Op::Conv2d: {
        const Shape& bs = i2->shape();
        if (bs.n != 1 || bs.h != 1 || bs.w != 1 || bs.c != i1->shape().n)
          throw std::invalid_argument("conv2d: bias shape " + bs.str() +
                                      " does not match weight " +
                                      i1->shape().str());
        return grumo::conv2d(*i0, *i1,
                             std::span<const float>(i2->data(), i2->size()),
                             node.stride, node.pad);
      }
      case Op::Relu:
        return map_unary(*i0, act_relu);
      case Op::Elu:
        return map_unary(*i0, act_elu);
      case Op::Sigmoid:
        return map_unary(*i0, act_sigmoid);
      case Op::Square:
        return map_unary(*i0, [](float x) { return x * x; });
      case Op::Exp:
        return map_unary(*i0, [](float x) { return std::exp(x); });
      case Op::Clamp: {
        float lo = node.a, hi = node.b;
        return map_unary(*i0, [lo, hi](float x) {
          return std::min(hi, std::max(lo, x));
        });
      }
      case Op::Affine: {
        float a = node.a, b = node.b;
        return map_unary(*i0, [a, b](float x) { return a * x + b; });
      }
      case Op::Add:
        return zip_binary(*i0, *i1, [](float x, float y) { return x + y; },
                          "add");
      case Op::Sub:
        return zip_binary(*i0, *i1, [](float x, float y) { return x - y; },
                          "sub");
      case Op::Mul:
        return zip_binary(*i0, *i1, [](float x, float y) { return x * y; },
                          "mul");
      case Op::ConcatC:
        return concat_channels(*i0, *i1);
      case Op::Upsample2x:
        return upsample_nearest2x(*i0);
      case Op::Sum: {
        double s = sum64(*i0);
        if (scalar_out) *scalar_out = s;
        Tensor v({1, 1, 1, 1});
        v[0] = float(s);
        return v;
      }
    }
    throw std::logic_error("tape: unknown op");
  }

  Tensor& grad_slot(NodeId id, const Shape& shape) {
    if (grads_[id].empty()) grads_[id] = Tensor(shape);
    return grads_[id];
  }

  void accumulate(NodeId id, const Tensor& contribution) {
    Tensor& g = grad_slot(id, contribution.shape());
    float* p = g.data();
    const float* q = contribution.data();
    for (std::size_t i = 0; i < g.size(); ++i) p[i] += q[i];
  }

  void propagate(NodeId id) {
    const Node& node = nodes_[id];
    const Tensor& g = grads_[id];
    auto in_val = [&](int k) -> const Tensor& {
      return nodes_[node.in[k]].value;
    };
    switch (node.op) {
      case Op::Leaf:
        return;
      case Op::Conv2d: {
        const Tensor& x = in_val(0);
        const Tensor& w = in_val(1);
        Tensor& gx = grad_slot(node.in[0], x.shape());
        Tensor& gw = grad_slot(node.in[1], w.shape());
        Tensor& gb = grad_slot(node.in[2], in_val(2).shape());
        conv2d_backward(x, w, g, node.stride, node.pad, gx, gw,
                        std::span<float>(gb.data(), gb.size()));
        return;
      }
      case Op::Relu: {
        const Tensor& x = in_val(0);
        accumulate(node.in[0], zip_binary(g, x,
                                          [](float gv, float xv) {
                                            return xv > 0.0f ? gv : 0.0f;
                                          },
                                          "relu'"));
        return;
      }
      case Op::Elu: {
        const Tensor& x = in_val(0);
        accumulate(node.in[0],
                   zip_binary(g, x,
                              [](float gv, float xv) {
                                return xv > 0.0f ? gv : gv * std::exp(xv);
                              },
                              "elu'"));
        return;
      }
      case Op::Sigmoid: {
        const Tensor& s = node.value;
        accumulate(node.in[0],
                   zip_binary(g, s,
                              [](float gv, float sv) {
                                return gv * sv * (1.0f - sv);
                              },
                              "sigmoid'"));
        return;
      }
      case Op::Square: {
        const Tensor& x = in_val(0);
        accumulate(node.in[0], zip_binary(g, x,
                                          [](float gv, float xv) {
                                            return gv * 2.0f * xv;
                                          },
                                          "square'"));
        return;
      }
      case Op::Exp: {
        accumulate(node.in[0],
                   zip_binary(g, node.value,
                              [](float gv, float ev) { return gv * ev; },
                              "exp'"));
        return;
      }
      case Op::Clamp: {
        const Tensor& x = in_val(0);
        float lo = node.a, hi = node.b;
        accumulate(node.in[0],
                   zip_binary(g, x,
                              [lo, hi](float gv, float xv) {
                                return (xv >= lo && xv <= hi) ? gv : 0.0f;
                              },
                              "clamp'"));
        return;
      }
      case Op::Affine: {
        float a = node.a;
        accumulate(node.in[0],
                   map_unary(g, [a](float gv) { return gv * a; }));
        return;
      }
      case Op::Add:
        accumulate(node.in[0], g);
        accumulate(node.in[1], g);
        return;
      case Op::Sub:
        accumulate(node.in[0], g);
        accumulate(node.in[1], map_unary(g, [](float v) { return -v; }));
        return;
      case Op::Mul:
        accumulate(node.in[0],
                   zip_binary(g, in_val(1),
                              [](float gv, float v) { return gv * v; },
                              "mul'"));
        accumulate(node.in[1],
                   zip_binary(g, in_val(0),
                              [](float gv, float v) { return gv * v; },
                              "mul'"));
        return;
      case Op::ConcatC: {
        int ca = in_val(0).shape().c;
        int cb = in_val(1).shape().c;
        accumulate(node.in[0], slice_channels(g, 0, ca));
        accumulate(node.in[1], slice_channels(g, ca, cb));
        return;
      }
      case Op::Upsample2x:
        accumulate(node.in[0],
                   upsample_nearest2x_backward(g, in_val(0).shape()));
        return;
      case Op::Sum: {
        float gv = g[0];
        accumulate(node.in[0], Tensor::full(in_val(0).shape(), gv));
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> tags_;
  std::vector<Tensor> grads_;
  bool has_grads_ = false;
};

}  // namespace grumo
