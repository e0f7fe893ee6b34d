#pragma once

#include "gsnn/config.hpp"
#include "gsnn/layers.hpp"
#include "gsnn/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn {

/// Per-group full-field blocks [B x dim], in the reduction model's group order.
using FullState = std::vector<Tensor>;

/// Column statistics used to standardise a group before encoding:
/// per-column mean and one pooled standard deviation.
inline std::pair<Tensor, double> group_statistics(const Tensor& data) {
  const std::size_t rows = data.rows(), cols = data.cols();
  Tensor mean(Tensor::Shape{cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += data.at(r, c);
  for (std::size_t c = 0; c < cols; ++c) mean[c] /= static_cast<double>(rows);
  double ss = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) ss += (data.at(r, c) - mean[c]) * (data.at(r, c) - mean[c]);
  const double sd = std::sqrt(ss / static_cast<double>(rows * cols));
  return {mean, sd > 1e-300 ? sd : 1.0};
}

/// (1/n) Σ (s − ŝ)² over all entries + λ · (1/B) Σ |x|.
inline Var ae_loss(Var s, Var s_hat, Var x, double lambda_reg) {
  Var rec = mse(s, s_hat);
  if (lambda_reg == 0.0) return rec;
  const double rows = static_cast<double>(x.value().rank() >= 2 ? x.value().rows() : 1);
  return add(rec, scale(sum(abs(x)), lambda_reg / rows));
}

/// Sparse autoencoder for one state group. Parameters live under "ae.<group>.":
/// enc<i>/dec<i> dense layers, a frozen scaler (shift, scale) and a frozen
/// bottleneck mask whose non-zero entries are the retained latent units.
struct GroupAutoencoder {
  AeConfig cfg;
  std::size_t input_dim = 0;
  DenseStack encoder;
  DenseStack decoder;

  GroupAutoencoder() = default;
  GroupAutoencoder(AeConfig c, std::size_t dim) : cfg(std::move(c)), input_dim(dim) {
    if (input_dim == 0 || cfg.bottleneck == 0) throw std::invalid_argument("autoencoder '" + cfg.group + "': zero width");
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(cfg.bottleneck);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      encoder.layers.push_back({prefix() + ".enc" + std::to_string(i), widths[i], widths[i + 1],
                                i + 2 < widths.size() ? Activation::relu : Activation::linear});
    for (std::size_t i = widths.size() - 1; i > 0; --i)
      decoder.layers.push_back({prefix() + ".dec" + std::to_string(widths.size() - 1 - i), widths[i], widths[i - 1],
                                i > 1 ? Activation::relu : Activation::linear});
  }

  std::string prefix() const { return "ae." + cfg.group; }
  std::string shift_name() const { return prefix() + ".shift"; }
  std::string scale_name() const { return prefix() + ".scale"; }
  std::string mask_name() const { return prefix() + ".mask"; }

  /// Random weights, scaler fitted to `data` [S x input_dim], all units active.
  void init(ParameterSet& ps, Rng& rng, const Tensor& data) const {
    encoder.init(ps, rng);
    decoder.init(ps, rng);
    auto [shift, sd] = group_statistics(data);
    ps.add(shift_name(), std::move(shift), true);
    ps.add(scale_name(), Tensor::vector({sd}), true);
    Tensor mask(Tensor::Shape{cfg.bottleneck});
    mask.fill(1.0);
    ps.add(mask_name(), std::move(mask), true);
  }

  std::vector<std::size_t> active(const ParameterSet& ps) const {
    std::vector<std::size_t> idx;
    const Tensor& m = ps.at(mask_name());
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i] != 0.0) idx.push_back(i);
    return idx;
  }

  void set_active(ParameterSet& ps, const std::vector<std::size_t>& idx) const {
    Tensor m(Tensor::Shape{cfg.bottleneck});
    for (auto i : idx) {
      if (i >= cfg.bottleneck) throw std::invalid_argument("latent unit out of range for '" + cfg.group + "'");
      m[i] = 1.0;
    }
    ps.at(mask_name()) = std::move(m);
  }

  Var normalize(Tape& t, const ParameterSet& ps, Var raw) const {
    check_input(raw.value());
    Tensor neg = ps.at(shift_name());
    for (auto& v : neg.values()) v = -v;
    return scale(add_bias(raw, t.constant(std::move(neg))), 1.0 / ps.at(scale_name())[0]);
  }

  Var denormalize(Tape& t, const ParameterSet& ps, Var y) const {
    return add_bias(scale(y, ps.at(scale_name())[0]), t.constant(ps.at(shift_name())));
  }

  /// Full bottleneck [B x bottleneck] before masking.
  Var encode_all(Tape& t, ParameterSet& ps, Var raw) const { return encoder(t, ps, normalize(t, ps, raw)); }

  /// Retained latent units [B x n_active].
  Var encode(Tape& t, ParameterSet& ps, Var raw) const { return gather_cols(encode_all(t, ps, raw), active(ps)); }

  /// Raw-unit reconstruction from retained latent units [B x n_active].
  Var decode(Tape& t, ParameterSet& ps, Var code) const {
    const auto idx = active(ps);
    if (code.value().cols() != idx.size())
      throw std::invalid_argument("decode '" + cfg.group + "': latent slice " + code.value().shape_string() + " but " +
                                  std::to_string(idx.size()) + " active units");
    return denormalize(t, ps, decoder(t, ps, scatter_cols(code, idx, cfg.bottleneck)));
  }

  /// Loss on standardised values for a batch of raw rows.
  Var loss(Tape& t, ParameterSet& ps, Var raw) const {
    Var s = normalize(t, ps, raw);
    Var code = gather_cols(encoder(t, ps, s), active(ps));
    Var s_hat = decoder(t, ps, scatter_cols(code, active(ps), cfg.bottleneck));
    return ae_loss(s, s_hat, code, cfg.lambda_reg);
  }

  void check_input(const Tensor& raw) const {
    if (raw.cols() != input_dim)
      throw std::invalid_argument("autoencoder '" + cfg.group + "': input " + raw.shape_string() + " but expects " +
                                  std::to_string(input_dim) + " columns");
  }
};

/// Which latent coordinates belong to which group: a partition of 0..dim.
struct SliceMap {
  std::vector<std::string> groups;
  std::vector<std::size_t> offset;
  std::vector<std::size_t> count;
  std::vector<std::vector<std::size_t>> units;  ///< bottleneck units behind each coordinate

  std::size_t dim() const { return offset.empty() ? 0 : offset.back() + count.back(); }

  std::size_t index_of(const std::string& g) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == g) return i;
    throw std::out_of_range("slice map has no group '" + g + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < groups.size(); ++i)
      j.push_back({{"group", groups[i]}, {"offset", offset[i]}, {"count", count[i]}, {"units", units[i]}});
    return j;
  }
};

struct ReductionModel {
  std::vector<GroupAutoencoder> aes;

  ReductionModel() = default;
  ReductionModel(const ReductionConfig& cfg, const std::vector<std::size_t>& dims) {
    if (cfg.groups.size() != dims.size()) throw std::invalid_argument("reduction: group/dimension count mismatch");
    for (std::size_t i = 0; i < dims.size(); ++i) aes.emplace_back(cfg.groups[i], dims[i]);
  }

  std::size_t size() const { return aes.size(); }

  SliceMap slices(const ParameterSet& ps) const {
    SliceMap m;
    std::size_t at = 0;
    for (const auto& ae : aes) {
      auto idx = ae.active(ps);
      m.groups.push_back(ae.cfg.group);
      m.offset.push_back(at);
      m.count.push_back(idx.size());
      at += idx.size();
      m.units.push_back(std::move(idx));
    }
    return m;
  }

  Var encode(Tape& t, ParameterSet& ps, const std::vector<Var>& groups) const {
    if (groups.size() != aes.size()) throw std::invalid_argument("encode: expected " + std::to_string(aes.size()) + " groups");
    std::vector<Var> parts;
    for (std::size_t i = 0; i < aes.size(); ++i) parts.push_back(aes[i].encode(t, ps, groups[i]));
    return concat_cols(parts);
  }

  Var decode_group(Tape& t, ParameterSet& ps, Var latent, std::size_t g) const {
    const SliceMap m = slices(ps);
    if (latent.value().cols() != m.dim())
      throw std::invalid_argument("decode: latent " + latent.value().shape_string() + " but slice map covers " +
                                  std::to_string(m.dim()) + " coordinates");
    return aes[g].decode(t, ps, slice_cols(latent, m.offset[g], m.count[g]));
  }

  std::vector<Var> decode(Tape& t, ParameterSet& ps, Var latent) const {
    std::vector<Var> out;
    for (std::size_t g = 0; g < aes.size(); ++g) out.push_back(decode_group(t, ps, latent, g));
    return out;
  }

  // Tape-free conveniences.
  Tensor encode(ParameterSet& ps, const FullState& s) const {
    Tape t(false);
    std::vector<Var> in;
    for (const auto& x : s) in.push_back(t.constant(x));
    return encode(t, ps, in).value();
  }
  FullState decode(ParameterSet& ps, const Tensor& latent) const {
    Tape t(false);
    FullState out;
    for (const Var& v : decode(t, ps, t.constant(latent))) out.push_back(v.value());
    return out;
  }
};

// ------------------------------------------------------ latent selection

/// Mean |activation| of each bottleneck unit over the rows of `codes`.
inline std::vector<double> mean_abs_activation(const Tensor& codes) {
  std::vector<double> m(codes.cols(), 0.0);
  for (std::size_t r = 0; r < codes.rows(); ++r)
    for (std::size_t c = 0; c < codes.cols(); ++c) m[c] += std::fabs(codes.at(r, c));
  for (auto& v : m) v /= static_cast<double>(std::max<std::size_t>(codes.rows(), 1));
  return m;
}

/// Units whose mean |activation| exceeds threshold · (largest in the group).
inline std::vector<std::vector<std::size_t>> select_active_latents(const std::vector<std::vector<double>>& activity,
                                                                   double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("select_active_latents: threshold must be > 0");
  std::vector<std::vector<std::size_t>> out;
  for (const auto& a : activity) {
    const double top = a.empty() ? 0.0 : *std::max_element(a.begin(), a.end());
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (top > 0.0 && a[i] > threshold * top) keep.push_back(i);
    out.push_back(std::move(keep));
  }
  return out;
}

inline std::size_t total_selected(const std::vector<std::vector<std::size_t>>& sel) {
  std::size_t n = 0;
  for (const auto& s : sel) n += s.size();
  return n;
}

class LatentSelectionError : public std::runtime_error {
 public:
  LatentSelectionError(const std::string& what, std::size_t available)
      : std::runtime_error(what), available(available) {}
  std::size_t available;
};

struct LatentSelection {
  std::vector<std::vector<std::size_t>> active;
  double threshold = 0.0;
};

/// Bisects the relative threshold until exactly `total` units are retained.
inline LatentSelection select_latent_total(const std::vector<std::vector<double>>& activity, std::size_t total) {
  std::size_t nonzero = 0;
  for (const auto& a : activity)
    for (double v : a) nonzero += v > 0.0;
  if (total > nonzero)
    throw LatentSelectionError("only " + std::to_string(nonzero) + " latent units are active, " +
                                   std::to_string(total) + " requested",
                               nonzero);
  double lo = 0.0, hi = 1.0;  // count(lo) >= total > count(hi) once the loop starts
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto n = total_selected(select_active_latents(activity, mid));
    if (n == total) return {select_active_latents(activity, mid), mid};
    (n > total ? lo : hi) = mid;
  }
  const auto n = total_selected(select_active_latents(activity, hi));
  throw LatentSelectionError("no threshold retains exactly " + std::to_string(total) + " units (tied activations)", n);
}

// ------------------------------------------------------------- training

struct ReductionHistory {
  std::vector<std::vector<double>> train;     ///< per group, before selection
  std::vector<std::vector<double>> finetune;  ///< per group, after selection
  LatentSelection selection;
};

inline std::vector<double> train_autoencoder(ParameterSet& ps, const GroupAutoencoder& ae, const Tensor& data,
                                             const TrainConfig& tc, Rng& rng, const EpochHook& hook = {}) {
  ae.check_input(data);
  return train_loop(ps, data.rows(), tc, rng, [&](Tape& t, std::span<const std::size_t> rows) {
    return ae.loss(t, ps, t.constant(take_rows(data, rows)));
  }, hook);
}

/// Initialises and trains every group, selects `latent_dim` units overall and
/// retrains with the reduced bottleneck.
inline ReductionHistory train_reduction(ParameterSet& ps, const ReductionModel& model, const ReductionConfig& cfg,
                                        const FullState& train, Rng& rng,
                                        const std::function<void(const std::string&, std::size_t, double)>& log = {}) {
  ReductionHistory h;
  std::vector<std::vector<double>> activity;
  for (std::size_t g = 0; g < model.size(); ++g) {
    const auto& ae = model.aes[g];
    if (!ps.contains(ae.shift_name())) ae.init(ps, rng, train[g]);
    h.train.push_back(train_autoencoder(ps, ae, train[g], ae.cfg.train, rng, [&](std::size_t e, double l) {
      if (log) log(ae.cfg.group, e, l);
    }));
    Tape t(false);
    activity.push_back(mean_abs_activation(ae.encode_all(t, ps, t.constant(train[g])).value()));
  }
  h.selection = select_latent_total(activity, cfg.latent_dim);
  for (std::size_t g = 0; g < model.size(); ++g) {
    const auto& ae = model.aes[g];
    ae.set_active(ps, h.selection.active[g]);
    if (cfg.finetune_epochs == 0) {
      h.finetune.emplace_back();
      continue;
    }
    TrainConfig tc = ae.cfg.train;
    tc.epochs = cfg.finetune_epochs;
    h.finetune.push_back(train_autoencoder(ps, ae, train[g], tc, rng, [&](std::size_t e, double l) {
      if (log) log(ae.cfg.group + "/finetune", e, l);
    }));
  }
  return h;
}

/// ‖s − ŝ‖_F / ‖s‖_F for one group over all rows.
inline double relative_l2(const Tensor& s, const Tensor& s_hat) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num += (s[i] - s_hat[i]) * (s[i] - s_hat[i]);
    den += s[i] * s[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace gsnn
