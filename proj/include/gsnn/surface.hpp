#pragma once

#include "gsnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn {

struct SurfacePoint {
  double x = 0.0;  ///< horizontal coordinate, m
  double y = 0.0;  ///< height above the container bottom, m
};

/// Free-surface samples at equally spaced horizontal stations.
struct SurfaceObservation {
  std::vector<SurfacePoint> points;

  std::size_t size() const { return points.size(); }

  /// Interleaved (x0, y0, x1, y1, ...), the layout fed to the sequence encoder.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(points.size() * 2);
    for (const auto& p : points) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
    return out;
  }

  static SurfaceObservation unflatten(std::span<const double> v) {
    if (v.size() % 2 != 0) throw std::invalid_argument("surface: odd number of coordinates");
    SurfaceObservation s;
    for (std::size_t i = 0; i < v.size(); i += 2) s.points.push_back({v[i], v[i + 1]});
    return s;
  }

  std::vector<double> heights() const {
    std::vector<double> h;
    h.reserve(points.size());
    for (const auto& p : points) h.push_back(p.y);
    return h;
  }

  /// Strictly increasing, equally spaced stations (relative tolerance `tol`) and finite values.
  bool valid(double tol = 1e-9) const {
    if (points.size() < 2) return false;
    const double span = points.back().x - points.front().x;
    if (!(span > 0.0)) return false;
    const double step = span / static_cast<double>(points.size() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y)) return false;
      if (std::fabs(points[i].x - (points.front().x + step * static_cast<double>(i))) > tol * span) return false;
    }
    return true;
  }
};

/// P stations equally spaced on [lo, hi].
inline std::vector<double> stations(double lo, double hi, std::size_t count) {
  if (count < 2) throw std::invalid_argument("surface resampling needs at least 2 stations");
  std::vector<double> s(count);
  for (std::size_t k = 0; k < count; ++k)
    s[k] = k + 1 == count ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return s;
}

struct InterpWeight {
  std::size_t seg = 0;  ///< left point of the bracketing segment
  double a = 0.0;       ///< fraction toward seg + 1
};

/// Bracketing segment and fraction for each of `count` equally spaced stations
/// between xs.front() and xs.back(). `xs` must be strictly increasing.
inline std::vector<InterpWeight> interpolation_weights(std::span<const double> xs, std::size_t count) {
  if (xs.size() < 2) throw std::invalid_argument("surface resampling needs at least 2 distinct points");
  const auto st = stations(xs.front(), xs.back(), count);
  std::vector<InterpWeight> w(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    while (seg + 2 < xs.size() && st[k] >= xs[seg + 1]) ++seg;
    w[k] = {seg, std::clamp((st[k] - xs[seg]) / (xs[seg + 1] - xs[seg]), 0.0, 1.0)};
  }
  return w;
}

/// The same interpolation as a dense matrix W [count x n], so that W·y resamples y.
inline Tensor interpolation_matrix(std::span<const double> xs, std::size_t count) {
  const auto iw = interpolation_weights(xs, count);
  Tensor w = Tensor::matrix(count, xs.size());
  for (std::size_t k = 0; k < count; ++k) {
    w.at(k, iw[k].seg) += 1.0 - iw[k].a;
    w.at(k, iw[k].seg + 1) += iw[k].a;
  }
  return w;
}

inline double interpolate(std::span<const double> ys, const InterpWeight& w) {
  const double y0 = ys[w.seg], y1 = ys[w.seg + 1];
  // y0 + 1·(y1 − y0) can miss y1 by an ulp; a station on a data point must return it exactly.
  return w.a == 1.0 ? y1 : y0 + w.a * (y1 - y0);
}

/// Sorts by x, merges points whose x differ by at most `dedup_tol` (averaging
/// their heights) and linearly interpolates at `count` equally spaced stations.
inline SurfaceObservation resample_surface(std::vector<SurfacePoint> pts, std::size_t count, double dedup_tol = 1e-9) {
  for (const auto& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument("resample_surface: non-finite point");
  std::stable_sort(pts.begin(), pts.end(), [](const SurfacePoint& a, const SurfacePoint& b) { return a.x < b.x; });
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    double sx = 0.0, sy = 0.0;
    while (j < pts.size() && pts[j].x - pts[i].x <= dedup_tol) {
      sx += pts[j].x;
      sy += pts[j].y;
      ++j;
    }
    const double n = static_cast<double>(j - i);
    xs.push_back(sx / n);
    ys.push_back(sy / n);
    i = j;
  }
  if (xs.size() < 2)
    throw std::invalid_argument("resample_surface: need at least 2 distinct points, got " + std::to_string(xs.size()));
  const auto w = interpolation_weights(xs, count);
  const auto st = stations(xs.front(), xs.back(), count);
  SurfaceObservation out;
  out.points.resize(count);
  for (std::size_t k = 0; k < count; ++k) out.points[k] = {st[k], interpolate(ys, w[k])};
  return out;
}

}  // namespace gsnn
