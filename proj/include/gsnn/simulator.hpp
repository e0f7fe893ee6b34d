#pragma once

// The three-stage learned simulator: GRU surface encoder -> SPNN Euler step in
// the latent space -> per-group decoders, plus rollout and on-disk layout.

#include "gsnn/dataset.hpp"
#include "gsnn/evalkit.hpp"
#include "gsnn/reduction.hpp"
#include "gsnn/spnn.hpp"
#include "gsnn/surface2latent.hpp"

#include <filesystem>
#include <optional>

namespace gsnn {

struct TankGeometry {
  double tank_length = 0.1;
  std::size_t columns = 200;
  std::size_t stations = 21;

  double column_width() const { return tank_length / static_cast<double>(columns); }
  std::vector<double> column_centres() const {
    std::vector<double> xs(columns);
    for (std::size_t i = 0; i < columns; ++i) xs[i] = (static_cast<double>(i) + 0.5) * column_width();
    return xs;
  }
  std::vector<double> station_x() const {
    const auto xs = column_centres();
    return gsnn::stations(xs.front(), xs.back(), stations);
  }
  void validate() const {
    if (!(tank_length > 0.0) || stations < 2 || columns < stations)
      throw std::invalid_argument("tank geometry: need length > 0 and columns >= stations >= 2");
  }
};

/// Top boundary of a column-height field resampled to the geometry's stations.
inline SurfaceObservation extract_predicted_surface(std::span<const double> heights, const TankGeometry& g) {
  if (heights.empty()) throw std::invalid_argument("extract_predicted_surface: empty field");
  if (heights.size() != g.columns)
    throw std::invalid_argument("extract_predicted_surface: " + std::to_string(heights.size()) +
                                " columns but geometry has " + std::to_string(g.columns));
  return column_surface(heights, g.tank_length, g.stations);
}

class StageMissingError : public std::runtime_error {
 public:
  StageMissingError(const std::string& stage, const std::string& needed_by)
      : std::runtime_error("stage '" + stage + "' has not been trained; run it before " + needed_by), stage(stage) {}
  std::string stage;
};

struct LearnedSimulator {
  PipelineConfig cfg;
  TankGeometry geometry;
  double dt = 0.005;  ///< sampling interval the source model was trained at
  std::vector<std::string> groups;
  std::vector<std::size_t> group_dims;
  ReductionModel reduction;
  SurfaceEncoder encoder;
  Spnn spnn;
  ParameterSet ae, gru, sp;
  bool has_encoder = false, has_spnn = false;

  LearnedSimulator() = default;
  LearnedSimulator(PipelineConfig c, TankGeometry g, double sample_dt, std::vector<std::string> names,
                   std::vector<std::size_t> dims)
      : cfg(std::move(c)), geometry(g), dt(sample_dt), groups(std::move(names)), group_dims(std::move(dims)) {
    geometry.validate();
    if (groups.size() != group_dims.size() || groups.size() != cfg.reduction.groups.size())
      throw std::invalid_argument("simulator: group names, dimensions and autoencoder configs disagree");
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (cfg.reduction.groups[i].group != groups[i])
        throw std::invalid_argument("simulator: autoencoder " + std::to_string(i) + " is configured for '" +
                                    cfg.reduction.groups[i].group + "' but the data has '" + groups[i] + "'");
    reduction = ReductionModel(cfg.reduction, group_dims);
  }

  bool has_reduction() const { return !reduction.aes.empty() && ae.contains(reduction.aes[0].mask_name()); }

  void require(bool encoder_needed, bool spnn_needed, const std::string& who) const {
    if (!has_reduction()) throw StageMissingError("train-ae", who);
    if (encoder_needed && !has_encoder) throw StageMissingError("train-gru", who);
    if (spnn_needed && !has_spnn) throw StageMissingError("train-spnn", who);
  }

  std::size_t latent_dim() const { return reduction.slices(ae).dim(); }
  std::size_t surface_width() const { return 2 * geometry.stations; }

  std::size_t position_group() const {
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == "q") return i;
    throw std::invalid_argument("simulator: no position group 'q'");
  }

  /// Column heights -> station heights as a fixed linear map [P x columns].
  Tensor projection() const { return interpolation_matrix(geometry.column_centres(), geometry.stations); }

  /// Builds untrained encoder/SPNN shapes once the latent size is known.
  void shape_encoder() { encoder = SurfaceEncoder(cfg.gru, surface_width(), latent_dim()); }
  void shape_spnn() { spnn = Spnn(cfg.spnn, latent_dim()); }

  // --------------------------------------------------------- tape stages

  Var encode_window(Tape& t, const std::vector<Var>& window) { return encoder.encode(t, gru, window); }
  std::pair<Var, Var> step(Tape& t, Var x, double h) { return spnn.step(t, sp, x, h); }
  /// Station heights [B x P] of the decoded position group.
  Var station_heights(Tape& t, Var latent) {
    Var q = reduction.decode_group(t, ae, latent, position_group());
    return matmul_nt(q, t.constant(projection()));
  }

  /// Interleaved (x, y) surface rows [B x 2P] from station heights [B x P].
  Tensor surface_rows(const Tensor& heights) const {
    const auto xs = geometry.station_x();
    Tensor out = Tensor::matrix(heights.rows(), surface_width());
    for (std::size_t r = 0; r < heights.rows(); ++r)
      for (std::size_t k = 0; k < geometry.stations; ++k) {
        out.at(r, 2 * k) = xs[k];
        out.at(r, 2 * k + 1) = heights.at(r, k);
      }
    return out;
  }
};

// ---------------------------------------------------------------- rollout

enum class RolloutMode { observation, closed_loop };

inline RolloutMode parse_rollout_mode(const std::string& s) {
  if (s == "observation") return RolloutMode::observation;
  if (s == "closed-loop" || s == "closed_loop") return RolloutMode::closed_loop;
  throw std::invalid_argument("unknown rollout mode '" + s + "' (known: observation, closed-loop)");
}

struct RolloutResult {
  std::vector<std::size_t> target;  ///< snapshot index each step predicts
  Tensor latent;                    ///< [steps x d]
  Tensor packed;                    ///< [steps x packed_size(d)]
  FullState states;                 ///< per group [steps x dim]
  Tensor surface;                   ///< [steps x 2P], interleaved

  std::size_t steps() const { return target.size(); }
};

namespace detail {

inline void check_finite_rows(const Tensor& x, std::size_t first_step) {
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (!std::isfinite(x.at(r, c)))
        throw metriplectic::DivergenceError("rollout diverged at step " + std::to_string(first_step + r) +
                                            " (non-finite latent)");
}

inline void append_rows(Tensor& dst, const Tensor& src) {
  if (dst.size() == 0) {
    dst = src;
    return;
  }
  Storage v = dst.values();
  v.insert(v.end(), src.values().begin(), src.values().end());
  dst = Tensor::matrix(dst.rows() + src.rows(), src.cols(), std::move(v));
}

}  // namespace detail

/// Predicts snapshots start+1 .. start+steps of a recording from its surface block.
/// Observation mode re-encodes the measured window before every step; closed-loop
/// mode slides the window over its own predicted surfaces after the first step.
inline RolloutResult rollout(LearnedSimulator& sim, const NamedBlock& surfaces, std::size_t start, std::size_t steps,
                             double h, RolloutMode mode) {
  sim.require(true, true, "rollout");
  if (surfaces.dim != sim.surface_width())
    throw std::invalid_argument("rollout: observations have width " + std::to_string(surfaces.dim) + ", model expects " +
                                std::to_string(sim.surface_width()));
  const std::size_t w = sim.encoder.window();
  if (start + 1 < w) throw std::invalid_argument("rollout: start snapshot lacks a full window of history");
  if (start >= surfaces.snapshots())
    throw std::invalid_argument("rollout: start snapshot " + std::to_string(start) + " beyond recording");
  if (mode == RolloutMode::observation && steps > 0 && start + steps - 1 >= surfaces.snapshots())
    throw std::invalid_argument("rollout: observation mode needs measured windows up to snapshot " +
                                std::to_string(start + steps - 1));
  RolloutResult out;
  out.states.resize(sim.groups.size());
  if (steps == 0) return out;
  const std::size_t last_read = mode == RolloutMode::observation ? start + steps - 1 : start;
  for (std::size_t n = start + 1 - w; n <= last_read; ++n)
    for (std::size_t c = 0; c < surfaces.dim; ++c)
      if (!std::isfinite(surfaces.row(n)[c]))
        throw std::invalid_argument("rollout: observation snapshot " + std::to_string(n) + " is not finite");

  auto window_block = [&](const std::vector<std::size_t>& ends) {
    std::vector<Tensor> win(w, Tensor::matrix(ends.size(), surfaces.dim));
    for (std::size_t i = 0; i < ends.size(); ++i)
      for (std::size_t k = 0; k < w; ++k)
        std::copy_n(surfaces.row(ends[i] + 1 + k - w), surfaces.dim, win[k].data() + i * surfaces.dim);
    return win;
  };
  auto forward = [&](Tape& t, const std::vector<Tensor>& win) {
    std::vector<Var> in;
    for (const auto& s : win) in.push_back(t.constant(s));
    return sim.step(t, sim.encode_window(t, in), h);
  };
  // Overflow inside a batched step surfaces as NonFiniteError without a row;
  // re-running the rows one at a time finds the first step that fails.
  auto locate_divergence = [&](const std::vector<Tensor>& win, std::size_t first_step) {
    const std::size_t rows = win.front().rows();
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<Tensor> one;
      const std::size_t idx[] = {r};
      for (const auto& s : win) one.push_back(take_rows(s, idx));
      try {
        Tape t(false);
        auto [next, packed] = forward(t, one);
        detail::check_finite_rows(next.value(), first_step + r);
        sim.station_heights(t, next);
        for (std::size_t g = 0; g < sim.groups.size(); ++g) sim.reduction.decode_group(t, sim.ae, next, g);
      } catch (const NonFiniteError& e) {
        throw metriplectic::DivergenceError("rollout diverged at step " + std::to_string(first_step + r) + " (" +
                                            e.what() + ")");
      }
    }
    throw metriplectic::DivergenceError("rollout diverged at step " + std::to_string(first_step));
  };
  auto advance = [&](const std::vector<Tensor>& win, std::size_t first_step) {
    Tape t(false);
    Tensor rows;
    try {
      auto [next, packed] = forward(t, win);
      detail::check_finite_rows(next.value(), first_step);
      Var z = sim.station_heights(t, next);
      FullState states;
      for (std::size_t g = 0; g < sim.groups.size(); ++g)
        states.push_back(sim.reduction.decode_group(t, sim.ae, next, g).value());
      rows = sim.surface_rows(z.value());
      detail::append_rows(out.latent, next.value());
      detail::append_rows(out.packed, packed.value());
      for (std::size_t g = 0; g < sim.groups.size(); ++g) detail::append_rows(out.states[g], states[g]);
    } catch (const NonFiniteError&) {
      locate_divergence(win, first_step);
    }
    detail::append_rows(out.surface, rows);
    return rows;
  };

  if (mode == RolloutMode::observation) {
    std::vector<std::size_t> ends(steps);
    for (std::size_t k = 0; k < steps; ++k) ends[k] = start + k;
    advance(window_block(ends), 0);
  } else {
    std::vector<Tensor> win;
    for (const auto& s : window_block({start})) win.push_back(s);
    for (std::size_t k = 0; k < steps; ++k) {
      const Tensor rows = advance(win, k);
      win.erase(win.begin());
      win.push_back(rows);
    }
  }
  for (std::size_t k = 0; k < steps; ++k) out.target.push_back(start + k + 1);
  return out;
}

/// Rollout packaged as a dataset: the five state groups plus the surface group.
inline SloshDataset rollout_dataset(const LearnedSimulator& sim, const RolloutResult& r, double h) {
  SloshDataset ds;
  ds.dt = h;
  ds.tank_length = sim.geometry.tank_length;
  for (std::size_t g = 0; g < sim.groups.size(); ++g)
    ds.groups.push_back({sim.groups[g], sim.group_dims[g], r.states[g].to_vector()});
  ds.groups.push_back({kSurfaceGroup, sim.surface_width(), r.surface.to_vector()});
  return ds;
}

// ---------------------------------------------------------------- storage

inline constexpr const char* kModelManifest = "model.json";

inline nlohmann::json simulator_manifest(const LearnedSimulator& sim) {
  nlohmann::json j = {{"format", "gsnn-model"},
                      {"version", 1},
                      {"config", sim.cfg},
                      {"geometry",
                       {{"tank_length", sim.geometry.tank_length},
                        {"columns", sim.geometry.columns},
                        {"stations", sim.geometry.stations}}},
                      {"dt", sim.dt},
                      {"groups", sim.groups},
                      {"group_dims", sim.group_dims},
                      {"stages", {{"ae", sim.has_reduction()}, {"gru", sim.has_encoder}, {"spnn", sim.has_spnn}}}};
  if (sim.has_reduction()) j["slices"] = sim.reduction.slices(sim.ae).to_json();
  return j;
}

inline void save_simulator(const LearnedSimulator& sim, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  if (sim.has_reduction()) save_checkpoint(sim.ae, (d / "ae.gsnn").string());
  if (sim.has_encoder) save_checkpoint(sim.gru, (d / "gru.gsnn").string());
  if (sim.has_spnn) save_checkpoint(sim.sp, (d / "spnn.gsnn").string());
  write_text((d / kModelManifest).string(), simulator_manifest(sim).dump(2) + "\n");
}

/// Same entry names and shapes as a freshly initialised reference set.
inline void check_layout(const ParameterSet& have, const ParameterSet& want, const std::string& what) {
  for (const auto& e : want.entries()) {
    if (!have.contains(e.name)) throw std::runtime_error(what + ": checkpoint lacks '" + e.name + "'");
    if (have.at(e.name).shape() != e.value.shape())
      throw std::runtime_error(what + ": '" + e.name + "' is " + have.at(e.name).shape_string() + ", model expects " +
                               e.value.shape_string());
  }
  if (have.entries().size() != want.entries().size())
    throw std::runtime_error(what + ": checkpoint has " + std::to_string(have.entries().size()) + " entries, model expects " +
                             std::to_string(want.entries().size()));
}

inline LearnedSimulator load_simulator(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  if (!fs::exists(d / kModelManifest))
    throw std::runtime_error("'" + dir + "' is not a model directory (no " + kModelManifest + ")");
  const auto j = read_json((d / kModelManifest).string());
  if (j.value("format", "") != "gsnn-model") throw std::runtime_error("'" + dir + "': unknown model manifest format");
  TankGeometry g;
  g.tank_length = j["geometry"].at("tank_length").get<double>();
  g.columns = j["geometry"].at("columns").get<std::size_t>();
  g.stations = j["geometry"].at("stations").get<std::size_t>();
  LearnedSimulator sim(j.at("config").get<PipelineConfig>(), g, j.at("dt").get<double>(),
                       j.at("groups").get<std::vector<std::string>>(), j.at("group_dims").get<std::vector<std::size_t>>());
  const auto stages = j.value("stages", nlohmann::json::object());
  auto load = [&](const char* file, const char* stage) -> std::optional<ParameterSet> {
    if (!stages.value(stage, false)) return std::nullopt;
    return load_checkpoint((d / file).string());
  };
  Rng scratch(0);
  if (auto ps = load("ae.gsnn", "ae")) {
    ParameterSet want;
    for (const auto& a : sim.reduction.aes) a.init(want, scratch, Tensor::matrix(1, a.input_dim));
    check_layout(*ps, want, "ae.gsnn");
    sim.ae = std::move(*ps);
  }
  if (auto ps = load("gru.gsnn", "gru")) {
    sim.require(false, false, "loading gru.gsnn");
    sim.shape_encoder();
    ParameterSet want;
    sim.encoder.init(want, scratch, Tensor::matrix(1, sim.surface_width()), Tensor::matrix(1, sim.latent_dim()));
    check_layout(*ps, want, "gru.gsnn");
    sim.gru = std::move(*ps);
    sim.has_encoder = true;
  }
  if (auto ps = load("spnn.gsnn", "spnn")) {
    sim.require(false, false, "loading spnn.gsnn");
    sim.shape_spnn();
    ParameterSet want;
    sim.spnn.init(want, scratch, Tensor());
    check_layout(*ps, want, "spnn.gsnn");
    sim.sp = std::move(*ps);
    sim.has_spnn = true;
  }
  return sim;
}

}  // namespace gsnn
