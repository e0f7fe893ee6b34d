#pragma once

// Stage-wise training of the source simulator on generated recordings and the
// metrics used to judge each stage.

#include "gsnn/simulator.hpp"

namespace gsnn {

/// Independent, reproducible stream per stage and seed.
inline std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stage + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum Stage : std::uint64_t { kSplitStage = 0, kAeStage = 1, kGruStage = 2, kSpnnStage = 3, kCorrectStage = 4 };

/// Windows whose successor snapshot exists, split at random into train/test.
struct WindowSplit {
  std::vector<WindowRef> train, test;
};

inline WindowSplit split_windows(const std::vector<SloshDataset>& data, std::size_t window, double fraction,
                                 std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("no recordings given");
  Rng rng(stage_seed(seed, kSplitStage));
  auto [tr, te] = split_random(all_windows(data, window, 1), fraction, rng);
  if (tr.empty() || te.empty()) throw std::invalid_argument("recordings too short for a train/test split");
  return {std::move(tr), std::move(te)};
}

inline FullState gather_state(const std::vector<SloshDataset>& data, const std::vector<WindowRef>& refs,
                              const std::vector<std::string>& groups, std::size_t offset = 0) {
  FullState s;
  for (const auto& g : groups) s.push_back(gather_group(data, refs, g, offset));
  return s;
}

/// Checks that every recording carries the state groups and shares one geometry and Δt.
inline void check_recordings(const std::vector<SloshDataset>& data, const std::vector<std::string>& groups) {
  if (data.empty()) throw std::invalid_argument("no recordings given");
  for (const auto& ds : data) {
    ds.validate();
    for (const auto& g : groups)
      if (ds.group(g).dim != data.front().group(g).dim)
        throw std::invalid_argument("recordings disagree on the width of group '" + g + "'");
    if (ds.dt != data.front().dt) throw std::invalid_argument("recordings disagree on the sampling interval");
  }
}

/// Fresh simulator shaped for `data` (before any stage is trained).
inline LearnedSimulator make_simulator(const PipelineConfig& cfg, const std::vector<SloshDataset>& data) {
  const std::vector<std::string> groups(state_groups().begin(), state_groups().end());
  check_recordings(data, groups);
  std::vector<std::size_t> dims;
  for (const auto& g : groups) dims.push_back(data.front().group(g).dim);
  TankGeometry geom;
  geom.tank_length = data.front().tank_length;
  geom.columns = data.front().group("q").dim;
  geom.stations = data.front().group(kSurfaceGroup).dim / 2;
  return LearnedSimulator(cfg, geom, data.front().dt, groups, dims);
}

using StageLog = std::function<void(const std::string& stage, std::size_t epoch, double loss)>;

inline ReductionHistory train_ae_stage(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                       const WindowSplit& split, const StageLog& log = {}) {
  Rng rng(stage_seed(sim.cfg.seed, kAeStage));
  sim.ae = ParameterSet();
  sim.has_encoder = sim.has_spnn = false;
  return train_reduction(sim.ae, sim.reduction, sim.cfg.reduction, gather_state(data, split.train, sim.groups), rng,
                         [&](const std::string& g, std::size_t e, double l) {
                           if (log) log("ae." + g, e, l);
                         });
}

/// Latent targets come from the trained autoencoders; the decoder is not touched.
inline std::vector<double> train_gru_stage(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                           const WindowSplit& split, const StageLog& log = {}) {
  sim.require(false, false, "train-gru");
  Rng rng(stage_seed(sim.cfg.seed, kGruStage));
  const Tensor x = sim.reduction.encode(sim.ae, gather_state(data, split.train, sim.groups));
  const auto steps = window_steps(data, split.train, sim.cfg.gru.window);
  sim.shape_encoder();
  sim.gru = ParameterSet();
  sim.encoder.init(sim.gru, rng, steps.back(), x);
  sim.has_encoder = true;
  return train_surface_encoder(sim.gru, sim.encoder, steps, x, sim.cfg.gru.train, rng, [&](std::size_t e, double l) {
    if (log) log("gru", e, l);
  });
}

/// Consecutive encoded snapshot pairs (n, n+1) of the training windows.
inline std::vector<double> train_spnn_stage(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                            const WindowSplit& split, const StageLog& log = {}) {
  sim.require(true, false, "train-spnn");
  Rng rng(stage_seed(sim.cfg.seed, kSpnnStage));
  const Tensor x0 = sim.reduction.encode(sim.ae, gather_state(data, split.train, sim.groups));
  const Tensor x1 = sim.reduction.encode(sim.ae, gather_state(data, split.train, sim.groups, 1));
  sim.shape_spnn();
  sim.sp = ParameterSet();
  sim.spnn.init(sim.sp, rng, x0);
  sim.has_spnn = true;
  return train_spnn(sim.sp, sim.spnn, x0, x1, sim.dt, sim.cfg.spnn.train, rng, [&](std::size_t e, double l) {
    if (log) log("spnn", e, l);
  });
}

// ---------------------------------------------------------------- metrics

/// ‖s − ŝ‖_F / ‖s‖_F per group after encode/decode of the snapshots behind `refs`.
inline std::vector<double> reconstruction_errors(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                                 const std::vector<WindowRef>& refs) {
  sim.require(false, false, "reconstruction metrics");
  const FullState s = gather_state(data, refs, sim.groups);
  const FullState r = sim.reduction.decode(sim.ae, sim.reduction.encode(sim.ae, s));
  std::vector<double> out;
  for (std::size_t g = 0; g < s.size(); ++g) out.push_back(relative_l2(s[g], r[g]));
  return out;
}

struct EncoderMetrics {
  double mse = 0.0;             ///< GRU estimate vs autoencoder latent, mean over entries
  double variance_floor = 0.0;  ///< smallest per-coordinate variance of the autoencoder latent
};

inline EncoderMetrics encoder_metrics(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                      const std::vector<WindowRef>& refs) {
  sim.require(true, false, "encoder metrics");
  const Tensor x = sim.reduction.encode(sim.ae, gather_state(data, refs, sim.groups));
  const Tensor xh = sim.encoder.encode(sim.gru, window_steps(data, refs, sim.cfg.gru.window));
  EncoderMetrics m;
  for (std::size_t i = 0; i < x.size(); ++i) m.mse += (x[i] - xh[i]) * (x[i] - xh[i]);
  m.mse /= static_cast<double>(x.size());
  const auto [mean, sd] = column_statistics(x);
  m.variance_floor = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double v = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) v += (x.at(r, c) - mean[c]) * (x.at(r, c) - mean[c]);
    m.variance_floor = std::min(m.variance_floor, v / static_cast<double>(x.rows()));
  }
  return m;
}

/// One observation-driven step per window: encode the measured window, advance
/// by `h`, compare the predicted surface with the measured successor snapshot.
inline ErrorReport one_step_surface_errors(LearnedSimulator& sim, const std::vector<SloshDataset>& data,
                                           const std::vector<WindowRef>& refs, double h, const std::string& split) {
  sim.require(true, true, "surface metrics");
  const auto steps = window_steps(data, refs, sim.encoder.window());
  Tape t(false);
  std::vector<Var> in;
  for (const auto& s : steps) in.push_back(t.constant(s));
  auto [next, packed] = sim.step(t, sim.encode_window(t, in), h);
  const Tensor zh = sim.station_heights(t, next).value();
  const Tensor z = surface_heights(gather_group(data, refs, kSurfaceGroup, 1));
  std::vector<std::size_t> snaps;
  for (const auto& r : refs) snaps.push_back(r.target + 1);
  ErrorReport rep = relative_error(z, zh, split, snaps, h);
  rep.provenance = {{"windows", refs.size()}, {"dt", h}};
  return rep;
}

}  // namespace gsnn
