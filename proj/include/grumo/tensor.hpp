#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace grumo {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const {
    return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Dense rank-4 float32 tensor in NCHW row-major layout. Treated as a value
/// type: once handed to another component (tape, model, file writer) it is
/// never mutated in place.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s) : shape_(s), data_(s.numel(), 0.0f) {
    check_dims(s);
  }
  Tensor(Shape s, std::vector<float> d) : shape_(s), data_(std::move(d)) {
    check_dims(s);
    if (data_.size() != shape_.numel())
      throw std::invalid_argument("tensor: buffer of " +
                                  std::to_string(data_.size()) +
                                  " values does not fill shape " + s.str());
  }

  static Tensor full(Shape s, float v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor from(Shape s, std::initializer_list<float> vals) {
    return Tensor(s, std::vector<float>(vals));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }

 private:
  static void check_dims(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw std::invalid_argument("tensor: negative dimension in " + s.str());
  }

  Shape shape_{};
  std::vector<float> data_;
};

inline bool same_bits(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

inline bool all_finite(const Tensor& t) {
  for (float v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

/// Per-pixel validity raster accompanying H×W maps.
struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> on;

  static Mask all(int h, int w, bool v = true) {
    Mask m;
    m.h = h;
    m.w = w;
    m.on.assign(std::size_t(h) * w, v ? 1 : 0);
    return m;
  }
  bool at(int y, int x) const { return on[std::size_t(y) * w + x] != 0; }
  void set(int y, int x, bool v) { on[std::size_t(y) * w + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t k = 0;
    for (auto v : on) k += v != 0;
    return k;
  }
  bool all_true() const { return count() == on.size(); }
};

inline Mask mask_and(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w)
    throw std::invalid_argument("mask_and: size mismatch");
  Mask m = a;
  for (std::size_t i = 0; i < m.on.size(); ++i)
    m.on[i] = (a.on[i] && b.on[i]) ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Pointwise math shared by the raw kernels and the autodiff tape, so the two
// paths produce bit-identical values.

inline float act_relu(float x) { return x > 0.0f ? x : 0.0f; }

inline float act_elu(float x) { return x > 0.0f ? x : std::expm1(x); }

inline float act_sigmoid(float x) {
  if (x >= 0.0f) {
    float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(x);
  return e / (1.0f + e);
}

template <class F>
Tensor map_unary(const Tensor& t, F&& f) {
  Tensor out(t.shape());
  const float* in = t.data();
  float* o = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) o[i] = f(in[i]);
  return out;
}

template <class F>
Tensor zip_binary(const Tensor& a, const Tensor& b, F&& f, const char* op) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument(std::string(op) + ": shape " + a.shape().str() +
                                " does not match " + b.shape().str());
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = f(pa[i], pb[i]);
  return out;
}

inline Tensor hflip_w(const Tensor& t) {
  Tensor out(t.shape());
  const Shape& s = t.shape();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y) {
        const float* src = t.data() + t.index(n, c, y, 0);
        float* dst = out.data() + out.index(n, c, y, 0);
        for (int x = 0; x < s.w; ++x) dst[x] = src[s.w - 1 - x];
      }
  return out;
}

/// Reduction in 64-bit; the order is the flat buffer order.
inline double sum64(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.values()) acc += v;
  return acc;
}

inline std::pair<float, float> minmax(const Tensor& t) {
  if (t.empty()) return {0.0f, 0.0f};
  float lo = t[0], hi = t[0];
  for (float v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

inline double stddev64(const Tensor& t) {
  if (t.empty()) return 0.0;
  double mean = sum64(t) / double(t.size());
  double acc = 0.0;
  for (float v : t.values()) {
    double d = double(v) - mean;
    acc += d * d;
  }
  return std::sqrt(acc / double(t.size()));
}

/// (t - min) / (max - min); a degenerate range collapses to all-zeros.
inline Tensor normalize_unit_range(const Tensor& t) {
  auto [lo, hi] = minmax(t);
  if (!(hi > lo)) return Tensor(t.shape());
  float range = hi - lo;
  return map_unary(t, [lo, range](float v) { return (v - lo) / range; });
}

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, no kernel flip) and the other spatial
// kernels used by the network.

inline Shape conv2d_output_shape(const Shape& in, const Shape& w, int stride,
                                 int pad) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  if (in.c != w.c)
    throw std::invalid_argument("conv2d: input " + in.str() + " has " +
                                std::to_string(in.c) +
                                " channels but weight " + w.str() +
                                " expects " + std::to_string(w.c));
  int oh = (in.h + 2 * pad - w.h) / stride + 1;
  int ow = (in.w + 2 * pad - w.w) / stride + 1;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: kernel " + w.str() +
                                " does not fit padded input " + in.str());
  return {in.n, w.n, oh, ow};
}

inline Tensor conv2d(const Tensor& input, const Tensor& weight,
                     std::span<const float> bias, int stride, int pad) {
  const Shape& s = input.shape();
  const Shape& ws = weight.shape();
  Shape os = conv2d_output_shape(s, ws, stride, pad);
  if (int(bias.size()) != ws.n)
    throw std::invalid_argument("conv2d: bias has " +
                                std::to_string(bias.size()) +
                                " entries, weight " + ws.str() + " needs " +
                                std::to_string(ws.n));
  Tensor out(os);
  for (int n = 0; n < os.n; ++n)
    for (int co = 0; co < os.c; ++co) {
      const float* wbase =
          weight.data() + std::size_t(co) * ws.c * ws.h * ws.w;
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          float acc = bias[co];
          int iy0 = oy * stride - pad;
          int ix0 = ox * stride - pad;
          int ky_lo = std::max(0, -iy0);
          int ky_hi = std::min(ws.h, s.h - iy0);
          int kx_lo = std::max(0, -ix0);
          int kx_hi = std::min(ws.w, s.w - ix0);
          for (int ci = 0; ci < ws.c; ++ci) {
            const float* wrow = wbase + std::size_t(ci) * ws.h * ws.w;
            for (int ky = ky_lo; ky < ky_hi; ++ky) {
              const float* irow =
                  input.data() + input.index(n, ci, iy0 + ky, 0) + ix0;
              const float* krow = wrow + std::size_t(ky) * ws.w;
              for (int kx = kx_lo; kx < kx_hi; ++kx)
                acc += irow[kx] * krow[kx];
            }
          }
          out.at(n, co, oy, ox) = acc;
        }
    }
  return out;
}

/// Accumulates gradients for input, weight and bias in one sweep over the
/// output grid; mirrors the forward loop structure exactly.
inline void conv2d_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_out, int stride, int pad,
                            Tensor& grad_in, Tensor& grad_weight,
                            std::span<float> grad_bias) {
  const Shape& s = input.shape();
  const Shape& ws = weight.shape();
  const Shape& os = grad_out.shape();
  for (int n = 0; n < os.n; ++n)
    for (int co = 0; co < os.c; ++co) {
      const float* wbase =
          weight.data() + std::size_t(co) * ws.c * ws.h * ws.w;
      float* gwbase =
          grad_weight.data() + std::size_t(co) * ws.c * ws.h * ws.w;
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          float go = grad_out.at(n, co, oy, ox);
          grad_bias[co] += go;
          int iy0 = oy * stride - pad;
          int ix0 = ox * stride - pad;
          int ky_lo = std::max(0, -iy0);
          int ky_hi = std::min(ws.h, s.h - iy0);
          int kx_lo = std::max(0, -ix0);
          int kx_hi = std::min(ws.w, s.w - ix0);
          for (int ci = 0; ci < ws.c; ++ci) {
            const float* wrow = wbase + std::size_t(ci) * ws.h * ws.w;
            float* gwrow = gwbase + std::size_t(ci) * ws.h * ws.w;
            for (int ky = ky_lo; ky < ky_hi; ++ky) {
              const float* irow =
                  input.data() + input.index(n, ci, iy0 + ky, 0) + ix0;
              float* girow =
                  grad_in.data() + grad_in.index(n, ci, iy0 + ky, 0) + ix0;
              const float* krow = wrow + std::size_t(ky) * ws.w;
              float* gkrow = gwrow + std::size_t(ky) * ws.w;
              for (int kx = kx_lo; kx < kx_hi; ++kx) {
                girow[kx] += go * krow[kx];
                gkrow[kx] += go * irow[kx];
              }
            }
          }
        }
    }
}

inline Tensor upsample_nearest2x(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out({s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * 2; ++y) {
        const float* src = t.data() + t.index(n, c, y / 2, 0);
        float* dst = out.data() + out.index(n, c, y, 0);
        for (int x = 0; x < s.w * 2; ++x) dst[x] = src[x / 2];
      }
  return out;
}

inline Tensor upsample_nearest2x_backward(const Tensor& grad_out,
                                          const Shape& in_shape) {
  Tensor g(in_shape);
  const Shape& os = grad_out.shape();
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x)
          g.at(n, c, y / 2, x / 2) += grad_out.at(n, c, y, x);
  return g;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw std::invalid_argument("concat: shape " + sa.str() +
                                " does not stack with " + sb.str());
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::size_t plane = std::size_t(sa.h) * sa.w;
    std::memcpy(out.data() + out.index(n, 0, 0, 0),
                a.data() + a.index(n, 0, 0, 0),
                plane * sa.c * sizeof(float));
    std::memcpy(out.data() + out.index(n, sa.c, 0, 0),
                b.data() + b.index(n, 0, 0, 0),
                plane * sb.c * sizeof(float));
  }
  return out;
}

inline Tensor slice_channels(const Tensor& t, int c0, int count) {
  const Shape& s = t.shape();
  Tensor out({s.n, count, s.h, s.w});
  std::size_t plane = std::size_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    std::memcpy(out.data() + out.index(n, 0, 0, 0),
                t.data() + t.index(n, c0, 0, 0),
                plane * count * sizeof(float));
  return out;
}

}  // namespace grumo
