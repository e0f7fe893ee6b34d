// gslosh: generate sloshing recordings, train the source simulator stage by
// stage, correct it on new observations, roll it out and score predictions.
// Every artifact-producing command writes a JSON run manifest next to its output.

#include "gsnn/correction.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

namespace {

using namespace gsnn;
using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "gslosh 1.0.0";

/// Rejected invocation; reported together with the command's usage text.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

bool g_quiet = false;

void note(const std::string& s) {
  if (!g_quiet) std::cerr << s << '\n';
}

// ------------------------------------------------------------- manifests

std::string digest(const std::string& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
  for (unsigned char c : io::read_file(path)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  json inputs = json::array();
  json outputs = json::array();
  json checkpoints = json::object();
  json results = json::object();

  void input(const std::string& p) { inputs.push_back({{"path", p}, {"fnv1a64", digest(p)}}); }
  void output(const std::string& p) { outputs.push_back({{"path", p}, {"fnv1a64", digest(p)}}); }

  void model_outputs(const std::string& dir) {
    for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn"}) {
      const auto p = (fs::path(dir) / f).string();
      if (fs::exists(p)) {
        output(p);
        checkpoints[fs::path(f).stem().string()] = outputs.back()["fnv1a64"];
      }
    }
    output((fs::path(dir) / kModelManifest).string());
  }

  void write(const std::string& path) const {
    const json j = {{"tool", kToolVersion}, {"command", command}, {"config", config},   {"seed", seed},
                    {"inputs", inputs},     {"outputs", outputs}, {"checkpoints", checkpoints}, {"results", results}};
    write_text(path, j.dump(2) + "\n");
  }
};

std::string dir_manifest(const std::string& dir, const std::string& command) {
  return (fs::path(dir) / ("manifest." + command + ".json")).string();
}

// ------------------------------------------------------------------ seeds

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("GSLOSH_SEED");
  if (!s || !*s) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (*end != '\0' || s[0] == '-') throw UsageError(std::string("GSLOSH_SEED must be a non-negative integer, got '") + s + "'");
  return v;
}

/// --seed wins, then a seed stated in the config or model, then GSLOSH_SEED, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& configured) {
  if (flag) return *flag;
  if (configured) return *configured;
  if (auto e = env_seed()) return *e;
  return 0;
}

// ------------------------------------------------------------------- data

std::vector<SloshDataset> read_all(const std::vector<std::string>& paths, Manifest& m) {
  std::vector<SloshDataset> out;
  for (const auto& p : paths) {
    out.push_back(read_dataset(p));
    m.input(p);
  }
  return out;
}

/// Writes and re-reads a dataset so a zero exit means the file decodes to what was meant.
void write_checked(const std::string& path, const SloshDataset& ds, const json& provenance) {
  write_dataset(path, ds, provenance);
  if (io::read_file(path) != encode_dataset(ds)) throw std::runtime_error("'" + path + "' did not read back identically");
}

void write_checked_text(const std::string& path, const std::string& text) {
  write_text(path, text);
  const auto b = io::read_file(path);
  if (std::string(b.begin(), b.end()) != text) throw std::runtime_error("'" + path + "' did not read back identically");
}

void save_checked(const LearnedSimulator& sim, const std::string& dir) {
  save_simulator(sim, dir);
  const LearnedSimulator back = load_simulator(dir);
  if (encode_checkpoint(back.ae) != encode_checkpoint(sim.ae) || encode_checkpoint(back.gru) != encode_checkpoint(sim.gru) ||
      encode_checkpoint(back.sp) != encode_checkpoint(sim.sp))
    throw std::runtime_error("model in '" + dir + "' did not read back identically");
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string loss_csv(const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out += std::to_string(e) + "," + format_g17(losses[e]) + "\n";
  return out;
}

json loss_summary(const std::vector<double>& losses) {
  if (losses.empty()) return {{"epochs", 0}};
  return {{"epochs", losses.size()},
          {"initial", losses.front()},
          {"final", losses.back()},
          {"reduction", losses.back() > 0.0 ? losses.front() / losses.back() : 0.0}};
}

StageLog progress(std::size_t every) {
  return [every](const std::string& stage, std::size_t epoch, double loss) {
    if (every > 0 && epoch % every == 0) note(stage + " epoch " + std::to_string(epoch) + " loss " + format_g17(loss));
  };
}

// ---------------------------------------------------------------- configs

json read_config_file(const std::string& path, Manifest& m) {
  if (path.empty()) return json::object();
  json j = read_json(path);
  if (!j.is_object()) throw UsageError("config '" + path + "' must hold a JSON object");
  m.input(path);
  return j;
}

std::optional<std::uint64_t> seed_in(const json& j) {
  if (j.contains("seed")) return j["seed"].get<std::uint64_t>();
  return std::nullopt;
}

struct StageFlags {
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 0;

  void add(CLI::App* c) {
    c->add_option("--epochs", epochs, "Override the stage's epoch count");
    c->add_option("--lr", lr, "Override the stage's learning rate")->check(CLI::PositiveNumber);
    c->add_option("--batch", batch, "Override the minibatch size (0 = full batch)");
    c->add_option("--seed", seed, "Seed (fallback: config, then GSLOSH_SEED, then 0)");
    c->add_option("--log-every", log_every, "Print the loss every N epochs (0 = silent)");
  }
  void apply(TrainConfig& tc) const {
    if (epochs) tc.epochs = *epochs;
    if (lr) tc.lr = *lr;
    if (batch) tc.batch = *batch;
  }
};

/// Training data must match the model's layout.
void check_against(const LearnedSimulator& sim, const std::vector<SloshDataset>& data) {
  check_recordings(data, sim.groups);
  for (std::size_t g = 0; g < sim.groups.size(); ++g)
    if (data.front().group(sim.groups[g]).dim != sim.group_dims[g])
      throw std::invalid_argument("data group '" + sim.groups[g] + "' has width " +
                                  std::to_string(data.front().group(sim.groups[g]).dim) + ", model expects " +
                                  std::to_string(sim.group_dims[g]));
  if (data.front().group(kSurfaceGroup).dim != sim.surface_width())
    throw std::invalid_argument("data surface width differs from the model's station count");
}

// ---------------------------------------------------------------- commands

struct GenArgs {
  std::string fluid = "glycerine", out;
  double impulse = 0.05, duration = 3.75, dt = 0.005, viscosity_scale = 1.0, noise = 0.0;
  std::size_t columns = 200, stations = 21;
  std::optional<std::uint64_t> seed;
};

int run_gen(const GenArgs& a) {
  Manifest m;
  m.command = "gen";
  SloshConfig c;
  try {
    c.fluid = fluid_preset(a.fluid);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  c.fluid.viscosity_scale = a.viscosity_scale;
  c.impulse = a.impulse;
  c.duration = a.duration;
  c.dt = a.dt;
  c.columns = a.columns;
  c.stations = a.stations;
  c.surface_noise = a.noise;
  c.seed = resolve_seed(a.seed, std::nullopt);
  SloshDataset ds;
  try {
    ds = slosh_generate(c);
  } catch (const CflError& e) {
    throw UsageError(std::string(e.what()) + " (suggested dt " + format_g17(e.suggested_dt) + ")");
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  m.seed = c.seed;
  m.config = {{"fluid", fluid_to_json(c.fluid)}, {"impulse", c.impulse},   {"duration", c.duration},
              {"dt", c.dt},                       {"columns", c.columns},  {"stations", c.stations},
              {"tank_length", c.tank_length},     {"depth", c.depth},      {"surface_noise", c.surface_noise}};
  ensure_parent(a.out);
  write_checked(a.out, ds, {{"tool", kToolVersion}, {"command", "gen"}});
  m.output(a.out);
  m.output(sidecar_path(a.out));
  m.results = {{"snapshots", ds.snapshots()}, {"kinematic_viscosity", c.fluid.kinematic_viscosity()}};
  m.write(a.out + ".manifest.json");
  note("wrote " + a.out + " (" + std::to_string(ds.snapshots()) + " snapshots)");
  return 0;
}

struct TrainArgs {
  std::vector<std::string> data;
  std::string config, out;
  StageFlags flags;
  std::optional<std::size_t> latent_dim, finetune_epochs;
  std::optional<double> train_fraction;
};

int run_train_ae(const TrainArgs& a) {
  Manifest m;
  m.command = "train-ae";
  const json file = read_config_file(a.config, m);
  PipelineConfig cfg = full_scale_profile();
  from_json(file, cfg);
  for (auto& g : cfg.reduction.groups) a.flags.apply(g.train);
  if (a.latent_dim) cfg.reduction.latent_dim = *a.latent_dim;
  if (a.finetune_epochs) cfg.reduction.finetune_epochs = *a.finetune_epochs;
  if (a.train_fraction) cfg.train_fraction = *a.train_fraction;
  cfg.seed = resolve_seed(a.flags.seed, seed_in(file));
  const auto data = read_all(a.data, m);

  LearnedSimulator sim = make_simulator(cfg, data);
  const auto split = split_windows(data, cfg.gru.window, cfg.train_fraction, cfg.seed);
  const auto hist = train_ae_stage(sim, data, split, progress(a.flags.log_every));

  fs::create_directories(a.out);
  // Later stages were trained against the old latent space and no longer apply.
  for (const char* stale : {"gru.gsnn", "spnn.gsnn"}) fs::remove(fs::path(a.out) / stale);
  save_checked(sim, a.out);
  std::string log = "group,phase,epoch,loss\n";
  json losses = json::object();
  for (std::size_t g = 0; g < sim.groups.size(); ++g) {
    for (std::size_t e = 0; e < hist.train[g].size(); ++e)
      log += sim.groups[g] + ",train," + std::to_string(e) + "," + format_g17(hist.train[g][e]) + "\n";
    for (std::size_t e = 0; e < hist.finetune[g].size(); ++e)
      log += sim.groups[g] + ",finetune," + std::to_string(e) + "," + format_g17(hist.finetune[g][e]) + "\n";
    losses[sim.groups[g]] = {{"train", loss_summary(hist.train[g])}, {"finetune", loss_summary(hist.finetune[g])}};
  }
  const auto log_path = (fs::path(a.out) / "ae_loss.csv").string();
  write_checked_text(log_path, log);
  const auto rel = reconstruction_errors(sim, data, split.test);
  json rec = json::object();
  for (std::size_t g = 0; g < sim.groups.size(); ++g) rec[sim.groups[g]] = rel[g];
  m.config = sim.cfg;
  m.seed = cfg.seed;
  m.model_outputs(a.out);
  m.output(log_path);
  m.results = {{"loss", losses},
               {"test_relative_error", rec},
               {"threshold", hist.selection.threshold},
               {"slices", sim.reduction.slices(sim.ae).to_json()},
               {"windows", {{"train", split.train.size()}, {"test", split.test.size()}}}};
  m.write(dir_manifest(a.out, "train-ae"));
  for (std::size_t g = 0; g < sim.groups.size(); ++g) note("ae " + sim.groups[g] + " test relative error " + format_g17(rel[g]));
  return 0;
}

/// Model in `dir`, or a fresh one that will report the missing autoencoder stage.
LearnedSimulator model_for_stage(const std::string& dir, const PipelineConfig& fresh, const std::vector<SloshDataset>& data,
                                 Manifest& m) {
  if (!fs::exists(fs::path(dir) / kModelManifest)) return make_simulator(fresh, data);
  for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn"})
    if (fs::exists(fs::path(dir) / f)) m.input((fs::path(dir) / f).string());
  LearnedSimulator sim = load_simulator(dir);
  check_against(sim, data);
  return sim;
}

int run_train_next(const TrainArgs& a, bool gru) {
  Manifest m;
  m.command = gru ? "train-gru" : "train-spnn";
  const json file = read_config_file(a.config, m);
  PipelineConfig fresh = full_scale_profile();
  from_json(file, fresh);
  const auto data = read_all(a.data, m);
  LearnedSimulator sim = model_for_stage(a.out, fresh, data, m);
  sim.require(!gru, false, m.command);
  // The autoencoder part of the config is fixed by the checkpoint; the stage's own section may change.
  if (gru && file.contains("gru")) from_json(file["gru"], sim.cfg.gru);
  if (!gru && file.contains("spnn")) from_json(file["spnn"], sim.cfg.spnn);
  a.flags.apply(gru ? sim.cfg.gru.train : sim.cfg.spnn.train);
  if (a.flags.seed) sim.cfg.seed = *a.flags.seed;
  const auto split = split_windows(data, sim.cfg.gru.window, sim.cfg.train_fraction, sim.cfg.seed);
  const auto losses = gru ? train_gru_stage(sim, data, split, progress(a.flags.log_every))
                          : train_spnn_stage(sim, data, split, progress(a.flags.log_every));
  save_checked(sim, a.out);
  const std::string stage = gru ? "gru" : "spnn";
  const auto log_path = (fs::path(a.out) / (stage + "_loss.csv")).string();
  write_checked_text(log_path, loss_csv(losses));
  m.config = sim.cfg;
  m.seed = sim.cfg.seed;
  m.model_outputs(a.out);
  m.output(log_path);
  m.results = {{"loss", loss_summary(losses)}};
  if (gru) {
    const auto em = encoder_metrics(sim, data, split.test);
    m.results["test_latent_mse"] = em.mse;
    m.results["variance_floor"] = em.variance_floor;
    note("gru test latent mse " + format_g17(em.mse) + " (variance floor " + format_g17(em.variance_floor) + ")");
  } else if (sim.has_encoder) {
    const auto rep = one_step_surface_errors(sim, data, split.test, sim.dt, "test");
    m.results["test_surface_error"] = {{"mean", rep.mean()}, {"max", rep.max()}};
    note("one-step surface error on test windows: mean " + format_g17(rep.mean()) + ", max " + format_g17(rep.max()));
  }
  m.write(dir_manifest(a.out, m.command));
  return 0;
}

struct CorrectArgs {
  std::string source, config, out, profile = "computational";
  std::vector<std::string> observations;
  std::optional<std::size_t> epochs, batch, patience, gru_unfrozen, spnn_unfrozen;
  std::optional<double> lr, lambda, train_fraction;
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 0;
};

int run_correct(const CorrectArgs& a) {
  Manifest m;
  m.command = "correct";
  json file = read_config_file(a.config, m);
  if (file.contains("correction")) file = file["correction"];
  CorrectionConfig cc;
  try {
    cc = correction_profile(a.profile);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  from_json(file, cc);
  if (a.epochs) cc.epochs = *a.epochs;
  if (a.batch) cc.batch = *a.batch;
  if (a.patience) cc.patience = *a.patience;
  if (a.gru_unfrozen) cc.gru_unfrozen = *a.gru_unfrozen;
  if (a.spnn_unfrozen) cc.spnn_unfrozen = *a.spnn_unfrozen;
  if (a.lr) cc.lr = *a.lr;
  if (a.lambda) cc.lambda = *a.lambda;
  if (a.train_fraction) cc.train_fraction = *a.train_fraction;
  if (!(cc.train_fraction > 0.0 && cc.train_fraction <= 1.0)) throw UsageError("train_fraction must be in (0, 1]");

  if (!fs::exists(fs::path(a.source) / kModelManifest))
    throw std::runtime_error("'" + a.source + "' is not a model directory");
  for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn"})
    if (fs::exists(fs::path(a.source) / f)) m.input((fs::path(a.source) / f).string());
  LearnedSimulator sim = load_simulator(a.source);
  sim.require(true, true, "correct");
  const auto data = read_all(a.observations, m);
  for (const auto& ds : data) {
    ds.validate();
    if (ds.group(kSurfaceGroup).dim != sim.surface_width())
      throw std::invalid_argument("observations have surface width " + std::to_string(ds.group(kSurfaceGroup).dim) +
                                  ", model expects " + std::to_string(sim.surface_width()));
  }
  const std::uint64_t seed = resolve_seed(a.seed, seed_in(file));
  WindowSplit split;
  if (cc.train_fraction >= 1.0)
    split.train = all_windows(data, sim.encoder.window(), 1);
  else
    split = split_windows(data, sim.encoder.window(), cc.train_fraction, seed);
  if (split.train.empty()) throw std::invalid_argument("observations too short for one window");

  auto reward_on = [&](const std::vector<WindowRef>& refs) -> json {
    if (refs.empty()) return nullptr;
    Tape t(false);
    const auto steps = window_steps(data, refs, sim.encoder.window());
    const Tensor z = surface_heights(gather_group(data, refs, kSurfaceGroup, 1));
    const auto r = reward_record(0, window_reward(t, sim, data, refs, steps, z, cc.lambda));
    const auto e = one_step_surface_errors(sim, data, refs, data.front().dt, "");
    return {{"total", r.total}, {"surface", r.surface}, {"degeneracy", r.degeneracy},
            {"surface_error_mean", e.mean()}, {"surface_error_max", e.max()}};
  };
  const json pre = {{"train", reward_on(split.train)}, {"validation", reward_on(split.test)}};
  const std::size_t every = a.log_every;
  const auto res = correct(sim, data, split.train, split.test, cc, seed, [&](const RewardRecord& tr, const RewardRecord& v) {
    if (every > 0 && tr.epoch % every == 0)
      note("correct epoch " + std::to_string(tr.epoch) + " reward " + format_g17(tr.total) + " validation " +
           format_g17(v.total));
  });
  const json post = {{"train", reward_on(split.train)}, {"validation", reward_on(split.test)}};
  sim.dt = data.front().dt;

  fs::create_directories(a.out);
  save_checked(sim, a.out);
  const auto train_csv = (fs::path(a.out) / "rewards.csv").string();
  const auto val_csv = (fs::path(a.out) / "rewards_validation.csv").string();
  write_checked_text(train_csv, reward_csv(res.train));
  write_checked_text(val_csv, reward_csv(res.validation));
  m.config = cc;
  m.config["profile"] = a.profile;
  m.seed = seed;
  m.model_outputs(a.out);
  m.output(train_csv);
  m.output(val_csv);
  m.results = {{"before", pre},
               {"after", post},
               {"epochs_run", res.train.size()},
               {"best_epoch", res.best_epoch},
               {"early_stopped", res.early_stopped},
               {"diverged", res.diverged},
               {"windows", {{"train", split.train.size()}, {"validation", split.test.size()}}}};
  m.write(dir_manifest(a.out, "correct"));
  if (res.diverged) note("warning: correction diverged; the last finite parameters were kept");
  note("reward " + format_g17(pre["train"]["total"].get<double>()) + " -> " +
       format_g17(post["train"]["total"].get<double>()));
  return 0;
}

struct SimulateArgs {
  std::string model, observations, out, mode = "observation";
  std::size_t steps = 0;
  std::optional<std::size_t> start;
  std::optional<double> dt;
};

int run_simulate(const SimulateArgs& a) {
  Manifest m;
  m.command = "simulate";
  RolloutMode mode;
  try {
    mode = parse_rollout_mode(a.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  LearnedSimulator sim = load_simulator(a.model);
  for (const char* f : {"ae.gsnn", "gru.gsnn", "spnn.gsnn"})
    if (fs::exists(fs::path(a.model) / f)) m.input((fs::path(a.model) / f).string());
  sim.require(true, true, "simulate");
  const SloshDataset obs = read_dataset(a.observations);
  m.input(a.observations);
  const std::size_t start = a.start.value_or(sim.encoder.window() - 1);
  const double h = a.dt.value_or(obs.dt);
  if (!(h >= 0.0) || !std::isfinite(h)) throw UsageError("--dt must be finite and >= 0");
  const RolloutResult r = rollout(sim, obs.group(kSurfaceGroup), start, a.steps, h, mode);
  SloshDataset ds = rollout_dataset(sim, r, h);
  ds.fluid = obs.fluid;
  ds.impulse = obs.impulse;
  ds.seed = obs.seed;
  ds.depth = obs.depth;
  const json prov = {{"tool", kToolVersion},
                     {"command", "simulate"},
                     {"mode", a.mode},
                     {"first_target", start + 1},
                     {"steps", a.steps}};
  ensure_parent(a.out);
  write_checked(a.out, ds, prov);
  m.config = {{"mode", a.mode}, {"steps", a.steps}, {"start", start}, {"dt", h}};
  m.output(a.out);
  m.output(sidecar_path(a.out));
  m.write(a.out + ".manifest.json");
  note("wrote " + std::to_string(r.steps()) + " predicted snapshots to " + a.out);
  return 0;
}

struct EvaluateArgs {
  std::string pred, truth, out, split = "test";
};

int run_evaluate(const EvaluateArgs& a) {
  Manifest m;
  m.command = "evaluate";
  const SloshDataset pred = read_dataset(a.pred), truth = read_dataset(a.truth);
  m.input(a.pred);
  m.input(a.truth);
  // Rollout outputs record which truth snapshot their first row predicts.
  std::size_t offset = 0;
  if (fs::exists(sidecar_path(a.pred))) {
    const json side = read_json(sidecar_path(a.pred));
    if (side.contains("provenance") && side["provenance"].contains("first_target"))
      offset = side["provenance"]["first_target"].get<std::size_t>();
  }
  const NamedBlock& ps = pred.group(kSurfaceGroup);
  const NamedBlock& ts = truth.group(kSurfaceGroup);
  if (ps.dim != ts.dim) throw std::invalid_argument("prediction and truth have different station counts");
  const std::size_t n = ps.snapshots();
  if (offset + n > ts.snapshots())
    throw std::invalid_argument("truth has " + std::to_string(ts.snapshots()) + " snapshots, prediction needs " +
                                std::to_string(offset + n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t c = 0; c < ps.dim; c += 2)
      if (std::fabs(ps.row(k)[c] - ts.row(offset + k)[c]) > 1e-9)
        throw std::invalid_argument("prediction and truth stations do not line up");
  const Tensor zh = surface_heights(Tensor::matrix(n, ps.dim, std::vector<double>(ps.data.begin(), ps.data.end())));
  const Tensor z = surface_heights(Tensor::matrix(
      n, ts.dim,
      std::vector<double>(ts.data.begin() + static_cast<std::ptrdiff_t>(offset * ts.dim),
                          ts.data.begin() + static_cast<std::ptrdiff_t>((offset + n) * ts.dim))));
  std::vector<std::size_t> snaps(n);
  for (std::size_t k = 0; k < n; ++k) snaps[k] = offset + k;
  ErrorReport rep = relative_error(z, zh, a.split, snaps, truth.dt);
  rep.provenance = {{"pred", a.pred}, {"truth", a.truth}};
  ensure_parent(a.out);
  write_checked_text(a.out, error_csv({rep}));
  const std::string summary = a.out + ".summary.json";
  write_checked_text(summary, error_summary({rep}).dump(2) + "\n");
  m.config = {{"split", a.split}, {"first_snapshot", offset}};
  m.output(a.out);
  m.output(summary);
  m.results = {{"mean", rep.mean()}, {"max", rep.max()}, {"literal_aggregate", rep.literal}};
  m.write(a.out + ".manifest.json");
  note("relative error over " + std::to_string(n) + " snapshots: mean " + format_g17(rep.mean()) + ", max " +
       format_g17(rep.max()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned sloshing simulator: data generation, staged training, correction and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", g_quiet, "Suppress progress output");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a shallow-water sloshing recording");
  c_gen->add_option("--fluid", gen.fluid, "Fluid preset (glycerine, water, blood, honey, ketchup)");
  c_gen->add_option("--impulse", gen.impulse, "Peak initial velocity, m/s");
  c_gen->add_option("--duration", gen.duration, "Recording length, s")->check(CLI::PositiveNumber);
  c_gen->add_option("--dt", gen.dt, "Sampling interval, s")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--viscosity-scale", gen.viscosity_scale, "Multiplier on the effective viscosity")
      ->check(CLI::NonNegativeNumber);
  c_gen->add_option("--columns", gen.columns, "Finite-volume columns");
  c_gen->add_option("--stations", gen.stations, "Surface observation points");
  c_gen->add_option("--noise", gen.noise, "Std of additive surface-height noise, m")->check(CLI::NonNegativeNumber);
  c_gen->add_option("--seed", gen.seed, "Seed for the observation noise");
  c_gen->add_option("--out", gen.out, "Output dataset path")->required();

  TrainArgs ae, gru, spnn;
  auto train_cmd = [&](const char* name, const char* help, TrainArgs& t) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--data", t.data, "Training recordings")->required()->expected(1, -1);
    c->add_option("--config", t.config, "JSON config; flags override its values");
    c->add_option("--out", t.out, "Model directory")->required();
    t.flags.add(c);
    return c;
  };
  auto* c_ae = train_cmd("train-ae", "Train the per-group autoencoders and select the latent units", ae);
  c_ae->add_option("--latent-dim", ae.latent_dim, "Total latent units kept");
  c_ae->add_option("--finetune-epochs", ae.finetune_epochs, "Epochs of masked retraining after selection");
  c_ae->add_option("--train-fraction", ae.train_fraction, "Fraction of windows used for training");
  auto* c_gru = train_cmd("train-gru", "Train the surface-to-latent GRU encoder (autoencoders frozen)", gru);
  auto* c_spnn = train_cmd("train-spnn", "Train the structure-preserving latent integrator", spnn);

  CorrectArgs cor;
  auto* c_cor = app.add_subcommand("correct", "Adapt a source model to new surface observations");
  c_cor->add_option("--source", cor.source, "Source model directory")->required();
  c_cor->add_option("--observations", cor.observations, "Surface recordings of the new fluid")
      ->required()
      ->expected(1, -1);
  c_cor->add_option("--config", cor.config, "JSON correction config (top level or under \"correction\")");
  c_cor->add_option("--out", cor.out, "Corrected model directory")->required();
  c_cor->add_option("--profile", cor.profile, "Base settings: computational or real");
  c_cor->add_option("--epochs", cor.epochs, "Override the epoch count");
  c_cor->add_option("--lr", cor.lr, "Override the learning rate")->check(CLI::PositiveNumber);
  c_cor->add_option("--lambda", cor.lambda, "Weight of the surface term")->check(CLI::NonNegativeNumber);
  c_cor->add_option("--batch", cor.batch, "Minibatch size (0 = full batch)");
  c_cor->add_option("--patience", cor.patience, "Early-stopping patience in epochs (0 = off)");
  c_cor->add_option("--gru-unfrozen", cor.gru_unfrozen, "GRU layers trained, counted from the output");
  c_cor->add_option("--spnn-unfrozen", cor.spnn_unfrozen, "SPNN layers trained, counted from the output");
  c_cor->add_option("--train-fraction", cor.train_fraction, "Fraction of windows used for updates");
  c_cor->add_option("--seed", cor.seed, "Seed (fallback: config, then GSLOSH_SEED, then 0)");
  c_cor->add_option("--log-every", cor.log_every, "Print the reward every N epochs (0 = silent)");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Roll a trained model forward from surface observations");
  c_sim->add_option("--model", sim.model, "Model directory")->required();
  c_sim->add_option("--observations", sim.observations, "Surface recording")->required();
  c_sim->add_option("--steps", sim.steps, "Number of predicted snapshots")->required();
  c_sim->add_option("--mode", sim.mode, "observation or closed-loop");
  c_sim->add_option("--start", sim.start, "Last snapshot of the first window (default: window - 1)");
  c_sim->add_option("--dt", sim.dt, "Step size, s (default: the recording's sampling interval)");
  c_sim->add_option("--out", sim.out, "Output dataset path")->required();

  EvaluateArgs ev;
  auto* c_ev = app.add_subcommand("evaluate", "Per-snapshot relative surface error of a prediction");
  c_ev->add_option("--pred", ev.pred, "Predicted dataset")->required();
  c_ev->add_option("--truth", ev.truth, "Ground-truth dataset")->required();
  c_ev->add_option("--out", ev.out, "Error CSV path")->required();
  c_ev->add_option("--split", ev.split, "Split label written to the CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == c_gen) return run_gen(gen);
    if (active == c_ae) return run_train_ae(ae);
    if (active == c_gru) return run_train_next(gru, true);
    if (active == c_spnn) return run_train_next(spnn, false);
    if (active == c_cor) return run_correct(cor);
    if (active == c_sim) return run_simulate(sim);
    if (active == c_ev) return run_evaluate(ev);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return 2;
  } catch (const StageMissingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
