#pragma once

// Surface error metrics and their CSV / JSON reports. Heights are measured
// from the tank bottom, so every ground-truth height must be positive.

#include "gsnn/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn {

/// sqrt( (1/P) Σ_p ((z_p − ẑ_p) / z_p)² ) for one snapshot.
inline double snapshot_relative_error(std::span<const double> z, std::span<const double> z_hat) {
  if (z.size() != z_hat.size() || z.empty())
    throw std::invalid_argument("relative error: " + std::to_string(z.size()) + " truth points vs " +
                                std::to_string(z_hat.size()) + " predicted");
  double acc = 0.0;
  for (std::size_t p = 0; p < z.size(); ++p) {
    if (!(z[p] > 0.0)) throw std::invalid_argument("relative error: ground-truth height must be > 0");
    const double r = (z[p] - z_hat[p]) / z[p];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(z.size()));
}

/// The aggregate formula taken literally: (1/N)·sqrt(Σ_n Σ_p (z² − ẑ²)/z²).
/// The inner sum can be negative; the square root is then taken of its
/// magnitude and the sign kept, so over- and under-prediction stay visible.
inline double literal_aggregate(const Tensor& z, const Tensor& z_hat) {
  if (z.size() != z_hat.size()) throw std::invalid_argument("literal aggregate: shape mismatch");
  const std::size_t n = z.rank() >= 2 ? z.rows() : 1;
  if (z.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(z[i] > 0.0)) throw std::invalid_argument("literal aggregate: ground-truth height must be > 0");
    s += (z[i] - z_hat[i]) * (z[i] + z_hat[i]) / (z[i] * z[i]);  // factored so identical inputs give exactly 0 under FMA
  }
  return std::copysign(std::sqrt(std::fabs(s)), s) / static_cast<double>(n);
}

struct ErrorReport {
  std::string split;
  std::vector<std::size_t> snapshot;
  std::vector<double> time;
  std::vector<double> series;
  double literal = 0.0;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return series.size(); }
  double max() const { return series.empty() ? 0.0 : *std::max_element(series.begin(), series.end()); }
  double mean() const {
    double s = 0.0;
    for (double v : series) s += v;
    return series.empty() ? 0.0 : s / static_cast<double>(series.size());
  }
};

/// Station heights [N x P] against predictions [N x P]; row n is snapshot `snapshots[n]`.
inline ErrorReport relative_error(const Tensor& z, const Tensor& z_hat, std::string split,
                                  std::vector<std::size_t> snapshots, double dt) {
  if (z.size() != z_hat.size() || (z.size() > 0 && z.cols() != z_hat.cols()))
    throw std::invalid_argument("relative error: truth " + z.shape_string() + " vs prediction " + z_hat.shape_string());
  const std::size_t n = z.size() == 0 ? 0 : z.rows();
  if (snapshots.size() != n) throw std::invalid_argument("relative error: snapshot index count mismatch");
  ErrorReport r;
  r.split = std::move(split);
  r.snapshot = std::move(snapshots);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = z.cols();
    r.series.push_back(snapshot_relative_error({z.data() + i * p, p}, {z_hat.data() + i * p, p}));
    r.time.push_back(static_cast<double>(r.snapshot[i]) * dt);
  }
  r.literal = literal_aggregate(z, z_hat);
  return r;
}

/// Odd columns of an interleaved (x, y) surface block: [N x 2P] -> [N x P].
inline Tensor surface_heights(const Tensor& interleaved) {
  if (interleaved.cols() % 2 != 0) throw std::invalid_argument("surface block width must be even");
  const std::size_t p = interleaved.cols() / 2;
  Tensor out = Tensor::matrix(interleaved.rows(), p);
  for (std::size_t r = 0; r < interleaved.rows(); ++r)
    for (std::size_t k = 0; k < p; ++k) out.at(r, k) = interleaved.at(r, 2 * k + 1);
  return out;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string error_csv(const std::vector<ErrorReport>& reports) {
  std::string out = "snapshot,time_s,rel_err,split\n";
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.size(); ++i)
      out += std::to_string(r.snapshot[i]) + "," + format_g17(r.time[i]) + "," + format_g17(r.series[i]) + "," +
             r.split + "\n";
  return out;
}

inline nlohmann::json error_summary(const std::vector<ErrorReport>& reports) {
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& r : reports)
    splits[r.split] = {{"max", r.max()}, {"mean", r.mean()}, {"count", r.size()}, {"literal_aggregate", r.literal},
                       {"provenance", r.provenance}};
  return {{"metric", "per-snapshot relative RMS of bottom-referenced surface height"}, {"splits", splits}};
}

inline void write_error_csv(const std::string& path, const std::vector<ErrorReport>& reports) {
  write_text(path, error_csv(reports));
}

}  // namespace gsnn
