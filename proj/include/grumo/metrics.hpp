#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grumo/tensor.hpp"
#include "grumo/uncertainty.hpp"

namespace grumo {

enum class MetricKind { AbsRel, Rmse, DeltaGe125 };

inline const char* metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::AbsRel:
      return "abs_rel";
    case MetricKind::Rmse:
      return "rmse";
    case MetricKind::DeltaGe125:
      return "delta_ge_125";
  }
  return "?";
}

constexpr MetricKind kAllMetrics[3] = {MetricKind::AbsRel, MetricKind::Rmse,
                                       MetricKind::DeltaGe125};

/// One mask-true pixel: ground truth and predicted depth in meters plus the
/// unitless uncertainty score.
struct PixelRecord {
  float gt = 0.0f;
  float pred = 0.0f;
  float u = 0.0f;
};

inline std::vector<PixelRecord> make_records(const Tensor& gt,
                                             const Tensor& pred,
                                             const Tensor& u,
                                             const Mask& mask) {
  if (!(gt.shape() == pred.shape()) || !(gt.shape() == u.shape()))
    throw std::invalid_argument("records: map shapes differ");
  std::vector<PixelRecord> records;
  records.reserve(mask.count());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.on[i]) continue;
    if (!(gt[i] > 0.0f)) continue;  // undefined relative error
    records.push_back({gt[i], pred[i], u[i]});
  }
  return records;
}

/// Per-pixel error values under a metric: |d-gt|/gt for Abs Rel, the squared
/// difference for RMSE, and the accuracy flag (ratio >= 1.25) for delta.
inline std::vector<float> pixel_errors(std::span<const PixelRecord> records,
                                       MetricKind kind) {
  if (records.empty())
    throw std::invalid_argument("pixel_errors: no records");
  std::vector<float> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    switch (kind) {
      case MetricKind::AbsRel:
        out.push_back(std::fabs(r.pred - r.gt) / r.gt);
        break;
      case MetricKind::Rmse: {
        float d = r.pred - r.gt;
        out.push_back(d * d);
        break;
      }
      case MetricKind::DeltaGe125: {
        float ratio = std::max(r.pred / r.gt, r.gt / r.pred);
        out.push_back(ratio >= 1.25f ? 1.0f : 0.0f);
        break;
      }
    }
  }
  return out;
}

/// Aggregates per-pixel error values: mean for Abs Rel, sqrt of the mean for
/// RMSE contributions, flagged fraction for delta. 64-bit accumulation.
inline double subset_metric(std::span<const float> errors, MetricKind kind) {
  if (errors.empty())
    throw std::invalid_argument("subset_metric: empty subset");
  double acc = 0.0;
  for (float e : errors) acc += e;
  double mean = acc / double(errors.size());
  return kind == MetricKind::Rmse ? std::sqrt(mean) : mean;
}

struct SparsificationResult {
  MetricKind kind = MetricKind::AbsRel;
  std::vector<double> fractions;  // strictly increasing, starts at 0
  std::vector<double> oracle;
  std::vector<double> actual;
  std::vector<double> random;
  double ause = 0.0;
  double aurg = 0.0;
};

inline void finish_areas(SparsificationResult& r) {
  double ause = 0.0, aurg = 0.0;
  for (std::size_t t = 0; t < r.fractions.size(); ++t) {
    ause += r.actual[t] - r.oracle[t];
    aurg += r.random[t] - r.actual[t];
  }
  r.ause = ause / double(r.fractions.size());
  r.aurg = aurg / double(r.fractions.size());
}

/// Sparsification for one image. Fractions run 0 .. 0.98 in `steps` equal
/// increments; at each one the floor(phi*n) highest-error (oracle) or
/// highest-uncertainty (actual) pixels are removed and the metric is
/// recomputed over the rest. The random curve keeps the full-set value.
/// Ties are broken by ascending pixel index.
inline SparsificationResult sparsification(std::span<const PixelRecord> records,
                                           MetricKind kind, int steps = 50) {
  if (records.empty())
    throw std::invalid_argument("sparsification: no records");
  if (steps < 2)
    throw std::invalid_argument("sparsification: need steps >= 2");
  std::size_t n = records.size();
  steps = int(std::min<std::size_t>(std::size_t(steps), n));

  std::vector<float> errors = pixel_errors(records, kind);
  std::vector<std::size_t> by_error(n), by_uncert(n);
  std::iota(by_error.begin(), by_error.end(), 0);
  std::iota(by_uncert.begin(), by_uncert.end(), 0);
  std::sort(by_error.begin(), by_error.end(),
            [&](std::size_t a, std::size_t b) {
              if (errors[a] != errors[b]) return errors[a] > errors[b];
              return a < b;
            });
  std::sort(by_uncert.begin(), by_uncert.end(),
            [&](std::size_t a, std::size_t b) {
              if (records[a].u != records[b].u)
                return records[a].u > records[b].u;
              return a < b;
            });

  // suffix[r] = sum of error values once the first r ordered pixels are gone
  auto suffix_sums = [&](const std::vector<std::size_t>& order) {
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;)
      suffix[i] = suffix[i + 1] + double(errors[order[i]]);
    return suffix;
  };
  std::vector<double> oracle_suffix = suffix_sums(by_error);
  std::vector<double> actual_suffix = suffix_sums(by_uncert);

  auto metric_at = [&](const std::vector<double>& suffix,
                       std::size_t removed) {
    std::size_t kept = n - removed;
    double mean = suffix[removed] / double(kept);
    return kind == MetricKind::Rmse ? std::sqrt(mean) : mean;
  };

  SparsificationResult r;
  r.kind = kind;
  double full = metric_at(oracle_suffix, 0);
  for (int t = 0; t <= steps; ++t) {
    double phi = double(t) * (0.98 / double(steps));
    auto removed = std::size_t(std::floor(phi * double(n)));
    r.fractions.push_back(phi);
    r.oracle.push_back(metric_at(oracle_suffix, removed));
    r.actual.push_back(metric_at(actual_suffix, removed));
    r.random.push_back(full);
  }
  finish_areas(r);
  return r;
}

/// Pointwise mean of per-image curves; AUSE/AURG recomputed from the
/// averaged curves.
inline SparsificationResult aggregate_sparsification(
    std::span<const SparsificationResult> per_image) {
  if (per_image.empty())
    throw std::invalid_argument("aggregate: no results");
  SparsificationResult out;
  out.kind = per_image[0].kind;
  out.fractions = per_image[0].fractions;
  for (const auto& r : per_image) {
    if (r.kind != out.kind || r.fractions != out.fractions)
      throw std::invalid_argument(
          "aggregate: mismatched metric or fraction grid");
  }
  std::size_t m = out.fractions.size();
  out.oracle.assign(m, 0.0);
  out.actual.assign(m, 0.0);
  out.random.assign(m, 0.0);
  for (const auto& r : per_image)
    for (std::size_t t = 0; t < m; ++t) {
      out.oracle[t] += r.oracle[t];
      out.actual[t] += r.actual[t];
      out.random[t] += r.random[t];
    }
  double inv = 1.0 / double(per_image.size());
  for (std::size_t t = 0; t < m; ++t) {
    out.oracle[t] *= inv;
    out.actual[t] *= inv;
    out.random[t] *= inv;
  }
  finish_areas(out);
  return out;
}

/// Calibration error over normalised errors and uncertainties. The error is
/// the squared difference (d - gt)^2; errors and uncertainties are min-max
/// normalised over the full record set (degenerate range collapses to
/// zeros, matching the score normalisation), binned into M uniform bins
/// over normalised error with a right-inclusive last bin.
inline double nuce(std::span<const PixelRecord> records, int bins = 100) {
  if (records.empty()) throw std::invalid_argument("nuce: no records");
  if (bins < 1) throw std::invalid_argument("nuce: need bins >= 1");
  std::size_t n = records.size();

  // Normalisation happens in float32, matching the precision of scores
  // arriving from files, so an injected u == e_norm is exactly calibrated.
  std::vector<float> e(n), u(n);
  for (std::size_t j = 0; j < n; ++j) {
    float d = records[j].pred - records[j].gt;
    e[j] = d * d;
    u[j] = records[j].u;
  }
  auto normalize = [](std::vector<float>& v) {
    auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    float lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
      std::fill(v.begin(), v.end(), 0.0f);
      return;
    }
    float range = hi - lo;
    for (float& x : v) x = (x - lo) / range;
  };
  normalize(e);
  normalize(u);

  std::vector<double> err_sum(bins, 0.0), unc_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t j = 0; j < n; ++j) {
    int b = std::min(int(double(e[j]) * bins), bins - 1);
    err_sum[b] += e[j];
    unc_sum[b] += u[j];
    count[b] += 1;
  }
  double out = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    double err = err_sum[b] / double(count[b]);
    double unc = unc_sum[b] / double(count[b]);
    out += (double(count[b]) / double(n)) * std::fabs(err - unc);
  }
  return out;
}

/// Spearman rank correlation with average ranks on ties.
inline double spearman(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equally sized series");
  auto ranks = [](std::span<const float> v) {
    std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      double avg = 0.5 * (double(i) + double(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = ra[i] - ma, db = rb[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace grumo
