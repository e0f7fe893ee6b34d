#pragma once

// Update loop that adapts a trained source simulator to a new fluid from
// free-surface recordings only. The decoder and every frozen layer stay
// bit-identical; the unfrozen GRU and SPNN tail layers minimise
// λ·surface + degeneracy.

#include "gsnn/source.hpp"

#include <limits>

namespace gsnn {

struct RewardRecord {
  std::size_t epoch = 0;
  double surface = 0.0;     ///< (1/N) Σ ‖z − ẑ‖² over station heights
  double degeneracy = 0.0;  ///< (1/N) Σ ‖L·DS‖² + ‖M·DE‖²
  double total = 0.0;       ///< λ·surface + degeneracy
};

struct RewardTerms {
  Var surface, degeneracy, total;
};

/// Degeneracy pairing (L with DS, M with DE), as in the SPNN loss.
inline RewardTerms reward(Var z_hat, Var z, Var packed, std::size_t d, double lambda) {
  const double points = static_cast<double>(z.value().cols());
  Var surf = scale(mse(z_hat, z), points);
  Var deg = mean(row_sum(metriplectic::degeneracy_terms(packed, d)));
  return {surf, deg, add(scale(surf, lambda), deg)};
}

inline RewardRecord reward_record(std::size_t epoch, const RewardTerms& r) {
  return {epoch, r.surface.value().item(), r.degeneracy.value().item(), r.total.value().item()};
}

struct CorrectionResult {
  std::vector<RewardRecord> train;
  std::vector<RewardRecord> validation;
  std::size_t best_epoch = 0;     ///< epoch whose parameters were kept
  bool early_stopped = false;
  bool diverged = false;
};

inline std::string reward_csv(const std::vector<RewardRecord>& h) {
  std::string out = "epoch,surface,degeneracy,total\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + format_g17(r.surface) + "," + format_g17(r.degeneracy) + "," +
           format_g17(r.total) + "\n";
  return out;
}

namespace detail {

struct FrozenFlags {
  std::vector<std::pair<ParameterSet*, std::vector<bool>>> saved;
  void save(ParameterSet& ps) {
    std::vector<bool> f;
    for (const auto& e : ps.entries()) f.push_back(e.frozen);
    saved.emplace_back(&ps, std::move(f));
  }
  void restore() {
    for (auto& [ps, f] : saved)
      for (std::size_t i = 0; i < f.size(); ++i) ps->entries()[i].frozen = f[i];
  }
};

}  // namespace detail

/// Reward of the simulator on windows `refs` of `data`, advancing by each recording's Δt.
inline RewardTerms window_reward(Tape& t, LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                 const std::vector<WindowRef>& refs, const std::vector<Tensor>& steps,
                                 const Tensor& z_next, double lambda) {
  std::vector<Var> in;
  for (const auto& s : steps) in.push_back(t.constant(s));
  auto [next, packed] = sim.step(t, sim.encode_window(t, in), data[refs.front().recording].dt);
  Var zh = sim.station_heights(t, next);
  return reward(zh, t.constant(z_next), packed, sim.latent_dim(), lambda);
}

/// Adapts `sim` in place on the windows of `data` (surface groups only).
/// `train_refs` receive gradient updates; `val_refs` only drive early stopping.
inline CorrectionResult correct(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                const std::vector<WindowRef>& train_refs, const std::vector<WindowRef>& val_refs,
                                const CorrectionConfig& cfg, std::uint64_t seed,
                                const std::function<void(const RewardRecord&, const RewardRecord&)>& log = {}) {
  sim.require(true, true, "correct");
  if (train_refs.empty()) throw std::invalid_argument("correct: no training windows");
  for (const auto& ds : data)
    if (ds.dt != data.front().dt) throw std::invalid_argument("correct: recordings disagree on the sampling interval");
  if (cfg.gru_unfrozen > sim.encoder.cells.size() || cfg.spnn_unfrozen > sim.spnn.net.layers.size())
    throw std::invalid_argument("correct: more unfrozen layers requested than the networks have");

  detail::FrozenFlags flags;
  flags.save(sim.ae);
  flags.save(sim.gru);
  flags.save(sim.sp);
  for (auto& e : sim.ae.entries()) e.frozen = true;
  sim.encoder.set_trainable_tail(sim.gru, cfg.gru_unfrozen);
  sim.spnn.set_trainable_tail(sim.sp, cfg.spnn_unfrozen);

  const std::size_t w = sim.encoder.window();
  const auto train_steps = window_steps(data, train_refs, w);
  const Tensor train_z = surface_heights(gather_group(data, train_refs, kSurfaceGroup, 1));
  std::vector<Tensor> val_steps;
  Tensor val_z;
  if (!val_refs.empty()) {
    val_steps = window_steps(data, val_refs, w);
    val_z = surface_heights(gather_group(data, val_refs, kSurfaceGroup, 1));
  }
  auto evaluate_val = [&](std::size_t epoch) {
    Tape t(false);
    return reward_record(epoch, window_reward(t, sim, data, val_refs, val_steps, val_z, cfg.lambda));
  };

  CorrectionResult res;
  ParameterSet keep_gru = sim.gru, keep_sp = sim.sp;  // best-so-far, or last good without validation
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  Adam opt({cfg.lr, cfg.weight_decay});
  Rng rng(stage_seed(seed, kCorrectStage));
  const std::size_t rows = train_refs.size();
  const std::size_t batch = cfg.batch == 0 ? rows : std::min(cfg.batch, rows);
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < rows) rng.shuffle(order);
    RewardRecord acc{epoch};
    for (std::size_t at = 0; at < rows && !res.diverged; at += batch) {
      const std::size_t n = std::min(batch, rows - at);
      const std::span<const std::size_t> idx(order.data() + at, n);
      std::vector<Tensor> steps;
      for (const auto& s : train_steps) steps.push_back(take_rows(s, idx));
      std::vector<WindowRef> refs;
      for (auto i : idx) refs.push_back(train_refs[i]);
      Tape t;
      const RewardTerms r = window_reward(t, sim, data, refs, steps, take_rows(train_z, idx), cfg.lambda);
      const RewardRecord rec = reward_record(epoch, r);
      if (!std::isfinite(rec.total)) {
        res.diverged = true;
        break;
      }
      const double wgt = static_cast<double>(n) / static_cast<double>(rows);
      acc.surface += wgt * rec.surface;
      acc.degeneracy += wgt * rec.degeneracy;
      acc.total += wgt * rec.total;
      t.backward(r.total);
      const auto grads = t.parameter_gradients();
      opt.step(sim.gru, grads);
      opt.step(sim.sp, grads);
    }
    if (res.diverged) break;
    res.train.push_back(acc);
    if (val_refs.empty()) {
      if (log) log(acc, acc);
      keep_gru = sim.gru;
      keep_sp = sim.sp;
      continue;
    }
    // Validation sees the parameters after this epoch's updates.
    const RewardRecord val = evaluate_val(epoch);
    res.validation.push_back(val);
    if (log) log(acc, val);
    if (!std::isfinite(val.total)) {
      res.diverged = true;
      break;
    }
    if (val.total < best) {
      best = val.total;
      res.best_epoch = epoch;
      keep_gru = sim.gru;
      keep_sp = sim.sp;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  if (val_refs.empty() && !res.diverged) res.best_epoch = res.train.empty() ? 0 : res.train.back().epoch;
  if (!res.train.empty() || res.diverged) {
    sim.gru = std::move(keep_gru);
    sim.sp = std::move(keep_sp);
  }
  flags.restore();
  return res;
}

}  // namespace gsnn
