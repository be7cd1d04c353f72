#pragma once

#include <cmath>
#include <numbers>

#include "grumo/tensor.hpp"

namespace grumo {

// One bilinear convention everywhere: half-pixel-centred source coordinates.
// Resize clamps at the border; rotation reads out-of-frame taps as zero and
// reports per-pixel validity instead.

inline Tensor bilinear_resize(const Tensor& t, int out_h, int out_w) {
  const Shape& s = t.shape();
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_resize: bad target size");
  Tensor out({s.n, s.c, out_h, out_w});
  double sy_scale = double(s.h) / out_h;
  double sx_scale = double(s.w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double sy = (oy + 0.5) * sy_scale - 0.5;
    int y0 = int(std::floor(sy));
    double fy = sy - y0;
    int y0c = std::clamp(y0, 0, s.h - 1);
    int y1c = std::clamp(y0 + 1, 0, s.h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      double sx = (ox + 0.5) * sx_scale - 0.5;
      int x0 = int(std::floor(sx));
      double fx = sx - x0;
      int x0c = std::clamp(x0, 0, s.w - 1);
      int x1c = std::clamp(x0 + 1, 0, s.w - 1);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          double v = (1.0 - fy) * ((1.0 - fx) * t.at(n, c, y0c, x0c) +
                                   fx * t.at(n, c, y0c, x1c)) +
                     fy * ((1.0 - fx) * t.at(n, c, y1c, x0c) +
                           fx * t.at(n, c, y1c, x1c));
          out.at(n, c, oy, ox) = float(v);
        }
    }
  }
  return out;
}

namespace detail {

// Taps with weight below this do not affect validity; they cannot move the
// value by more than float noise either way.
constexpr double kTapWeightEps = 1e-6;

struct RotateTap {
  int x0, y0;
  double w00, w01, w10, w11;  // (y,x) in {0,1}^2
  bool in(int dx, int dy, int h, int w) const {
    return y0 + dy >= 0 && y0 + dy < h && x0 + dx >= 0 && x0 + dx < w;
  }
};

inline RotateTap rotate_tap(int h, int w, double angle_rad, int oy, int ox) {
  double cx = w * 0.5, cy = h * 0.5;
  double px = ox + 0.5, py = oy + 0.5;
  // Sampling the source at -angle rotates the content by +angle.
  double ca = std::cos(-angle_rad), sa = std::sin(-angle_rad);
  double qx = ca * (px - cx) - sa * (py - cy) + cx;
  double qy = sa * (px - cx) + ca * (py - cy) + cy;
  double sx = qx - 0.5, sy = qy - 0.5;
  RotateTap tap;
  tap.x0 = int(std::floor(sx));
  tap.y0 = int(std::floor(sy));
  double fx = sx - tap.x0, fy = sy - tap.y0;
  tap.w00 = (1.0 - fy) * (1.0 - fx);
  tap.w01 = (1.0 - fy) * fx;
  tap.w10 = fy * (1.0 - fx);
  tap.w11 = fy * fx;
  return tap;
}

}  // namespace detail

/// Rotates content by `angle_deg` (positive = counter-clockwise about the
/// image centre). Out-of-frame taps read as zero. The mask marks pixels
/// whose significant taps all fall inside the frame and, when `src_valid`
/// is given, are all valid there — so no contaminated value leaks through.
inline std::pair<Tensor, Mask> rotate_bilinear(const Tensor& t,
                                               float angle_deg,
                                               const Mask* src_valid = nullptr) {
  const Shape& s = t.shape();
  double rad = double(angle_deg) * std::numbers::pi / 180.0;
  Tensor out(s);
  Mask mask = Mask::all(s.h, s.w, true);
  for (int oy = 0; oy < s.h; ++oy)
    for (int ox = 0; ox < s.w; ++ox) {
      detail::RotateTap tap = detail::rotate_tap(s.h, s.w, rad, oy, ox);
      const double wts[4] = {tap.w00, tap.w01, tap.w10, tap.w11};
      const int d[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};  // (dx, dy)
      bool ok = true;
      for (int k = 0; k < 4; ++k) {
        if (wts[k] <= detail::kTapWeightEps) continue;
        bool inside = tap.in(d[k][0], d[k][1], s.h, s.w);
        if (!inside ||
            (src_valid && !src_valid->at(tap.y0 + d[k][1], tap.x0 + d[k][0])))
          ok = false;
      }
      mask.set(oy, ox, ok);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          double v = 0.0;
          for (int k = 0; k < 4; ++k) {
            if (wts[k] <= 0.0) continue;
            if (!tap.in(d[k][0], d[k][1], s.h, s.w)) continue;
            v += wts[k] * t.at(n, c, tap.y0 + d[k][1], tap.x0 + d[k][0]);
          }
          out.at(n, c, oy, ox) = float(v);
        }
    }
  return {std::move(out), std::move(mask)};
}

/// Validity of the rotated frame alone, independent of the data.
inline Mask rotate_valid(int h, int w, float angle_deg) {
  Tensor dummy({1, 1, h, w});
  return rotate_bilinear(dummy, angle_deg).second;
}

}  // namespace grumo
