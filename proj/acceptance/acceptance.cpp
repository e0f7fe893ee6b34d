// Acceptance suite: one PASS/FAIL line per criterion, with the measured values
// and the wall time against its budget. Exit status is non-zero if any fails.
//
//   acceptance            run everything
//   acceptance 3 5        run only criteria 3 and 5

#include "gsnn/gsnn.hpp"

#include "support/gradcheck.hpp"
#include "support/render.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

using namespace gsnn;
using gsnn::testing::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  /// Records one measured quantity and whether it met its bound.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [miss]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<unsigned char> bytes(const ParameterSet& ps) { return encode_checkpoint(ps); }

// --------------------------------------------------------------- structural

void structural(Outcome& out) {
  const std::size_t d = 13;
  const PipelineConfig p = full_scale_profile();
  double skew_inf = 0.0, min_eig = std::numeric_limits<double>::infinity();
  std::size_t outputs = 0;
  for (std::uint64_t net_seed = 0; net_seed < 10; ++net_seed) {
    Rng rng(100 + net_seed);
    Spnn net(p.spnn, d);
    ParameterSet ps;
    net.init(ps, rng, Tensor{});
    const Tensor x = random_tensor({100, d}, rng, -3.0, 3.0);
    const Tensor packed = net.operators(ps, x);
    for (std::size_t r = 0; r < x.rows(); ++r, ++outputs) {
      const auto ops = metriplectic::unpack_operators(
          std::span<const double>(packed.data() + r * packed.cols(), packed.cols()), d);
      skew_inf = std::max(skew_inf, (ops.L + ops.L.transpose()).cwiseAbs().maxCoeff());
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(ops.M).eigenvalues().minCoeff());
    }
  }
  out.check(outputs == 1000, std::to_string(outputs) + " outputs");
  out.check(skew_inf == 0.0, "max|L+L^T| " + fmt("%g", skew_inf));
  out.check(min_eig >= -1e-12, "min eig M " + fmt("%.3g", min_eig));
}

// ---------------------------------------------------------------- gradients

void gradients(Outcome& out) {
  using gsnn::testing::gradcheck;
  using gsnn::testing::param_gradcheck;
  Rng rng(41);
  std::vector<std::pair<std::string, double>> errs;
  auto input_check = [&](const std::string& name, gsnn::testing::ScalarFn f, std::vector<Tensor> in) {
    errs.emplace_back(name, gradcheck(f, std::move(in)).max_rel_error);
  };

  input_check("dense-linear",
              [](Tape&, const std::vector<Var>& v) { return mean(square(dense(v[0], v[1], v[2], Activation::linear))); },
              {random_tensor({4, 3}, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng)});
  input_check("dense-relu",
              [](Tape&, const std::vector<Var>& v) { return mean(square(dense(v[0], v[1], v[2], Activation::relu))); },
              {random_tensor({4, 3}, rng), random_tensor({5, 3}, rng), random_tensor({5}, rng)});
  input_check("elementwise",
              [](Tape&, const std::vector<Var>& v) {
                return add(sum(mul(sigmoid(v[0]), tanh(v[1]))), sum(abs(sub(v[0], scale(v[1], 3.0)))));
              },
              {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
  input_check("structural",
              [](Tape&, const std::vector<Var>& v) {
                Var c = concat_cols({slice_cols(v[0], 1, 2), v[1]});
                Var s = scatter_cols(gather_cols(c, {3, 0, 2}), {4, 1, 0}, 6);
                return sum(square(row_sum(mul_row(mul(s, s), v[2]))));
              },
              {random_tensor({3, 4}, rng), random_tensor({3, 2}, rng), random_tensor({6}, rng)});
  {
    ParameterSet ps;
    GruCell cell{"g", 3, 4};
    cell.init(ps, rng);
    const Tensor x = random_tensor({3, 3}, rng), h = random_tensor({3, 4}, rng);
    errs.emplace_back("gru-cell", param_gradcheck(ps, [&](Tape& t, ParameterSet& p) {
                        return sum(square(cell(t, p, t.constant(x), t.constant(h))));
                      }));
    input_check("gru-cell-inputs",
                [&](Tape& t, const std::vector<Var>& v) { return sum(square(cell(t, ps, v[0], v[1]))); }, {x, h});
  }
  {
    AeConfig c{"v", {6, 5}, 3, 0.01, {}};
    GroupAutoencoder ae(c, 7);
    ParameterSet ps;
    const Tensor raw = random_tensor({5, 7}, rng);
    ae.init(ps, rng, raw);
    errs.emplace_back("ae-loss", param_gradcheck(ps, [&](Tape& t, ParameterSet& p) {
                        return ae.loss(t, p, t.constant(raw));
                      }));
    input_check("ae-loss-inputs",
                [](Tape&, const std::vector<Var>& v) { return ae_loss(v[0], v[1], v[2], 0.004); },
                {random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({4, 2}, rng)});
  }
  {
    GruConfig c;
    c.layers = 2;
    c.hidden = 3;
    c.window = 3;
    SurfaceEncoder enc(c, 4, 2);
    ParameterSet ps;
    enc.init(ps, rng, random_tensor({5, 4}, rng), random_tensor({5, 2}, rng));
    std::vector<Tensor> steps{random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)};
    const Tensor target = random_tensor({2, 2}, rng);
    errs.emplace_back("gru-loss", param_gradcheck(ps, [&](Tape& t, ParameterSet& p) {
                        std::vector<Var> in;
                        for (const auto& s : steps) in.push_back(t.constant(s));
                        return gru_loss(enc.encode(t, p, in), t.constant(target));
                      }));
  }
  {
    const std::size_t d = 3;
    SpnnConfig c;
    c.layers = 3;
    c.width = 6;
    Spnn net(c, d);
    ParameterSet ps;
    const Tensor x0 = random_tensor({4, d}, rng), x1 = random_tensor({4, d}, rng);
    net.init(ps, rng, x0);
    errs.emplace_back("spnn-loss", param_gradcheck(ps, [&](Tape& t, ParameterSet& p) {
                        auto [pred, packed] = net.step(t, p, t.constant(x0), 0.1);
                        return spnn_loss(t.constant(x1), pred, packed, d, 7.0);
                      }));
  }
  {
    const std::size_t d = 4;
    const Tensor w = random_tensor({2, d}, rng), w2 = random_tensor({2, 2}, rng);
    input_check("euler-update",
                [&](Tape& t, const std::vector<Var>& v) {
                  return sum(mul(metriplectic::euler_update(v[0], v[1], 0.3), t.constant(w)));
                },
                {random_tensor({2, d}, rng), random_tensor({2, metriplectic::packed_size(d)}, rng)});
    input_check("degeneracy",
                [&](Tape& t, const std::vector<Var>& v) {
                  return sum(mul(metriplectic::degeneracy_terms(v[0], d), t.constant(w2)));
                },
                {random_tensor({2, metriplectic::packed_size(d)}, rng)});
    input_check("reward",
                [&](Tape&, const std::vector<Var>& v) { return reward(v[0], v[1], v[2], d, 50.0).total; },
                {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng),
                 random_tensor({3, metriplectic::packed_size(d)}, rng)});
  }

  std::string worst_name;
  double worst = 0.0;
  for (const auto& [name, e] : errs) {
    if (e > 1e-5) out.check(false, name + " " + fmt("%.2e", e));
    if (e >= worst) worst = e, worst_name = name;
  }
  out.check(worst <= 1e-5, std::to_string(errs.size()) + " checks, worst " + worst_name + " " + fmt("%.2e", worst));
}

// ----------------------------------------------------------------- oscillator

void oscillator(Outcome& out) {
  // Unit mass and heat capacity make the degeneracy products cancel exactly in floating point.
  const OscillatorSystem sys{1.0, 4.0, 0.5, 1.0, 1.0};
  const double dt = 0.02;

  const auto ref = sys.trajectory({0.8, -0.3, 1.2}, dt, 10000);
  double residual = 0.0, drift = 0.0, min_ds = std::numeric_limits<double>::infinity();
  const double e0 = sys.energy(ref.front());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const auto r = metriplectic::degeneracy_residual(sys.operators(ref[i]));
    residual = std::max({residual, r.r_L, r.r_M});
    drift = std::max(drift, std::fabs(sys.energy(ref[i]) - e0) / std::fabs(e0));
    if (i > 0) min_ds = std::min(min_ds, sys.entropy(ref[i]) - sys.entropy(ref[i - 1]));
  }
  out.check(residual == 0.0, "exact residual " + fmt("%g", residual));
  out.check(drift <= 1e-8, "energy drift " + fmt("%.2e", drift));
  out.check(min_ds >= -1e-12, "min dS " + fmt("%.2e", min_ds));

  Rng rng(3);
  auto initial = [&] { return OscillatorState{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.8, 1.5)}; };
  const std::size_t steps = 100;
  std::vector<double> a, b;
  for (int k = 0; k < 20; ++k) {
    const auto tr = sys.trajectory(initial(), dt, steps);
    for (std::size_t i = 0; i < steps; ++i) {
      for (double v : {tr[i].q, tr[i].p, tr[i].T}) a.push_back(v);
      for (double v : {tr[i + 1].q, tr[i + 1].p, tr[i + 1].T}) b.push_back(v);
    }
  }
  const Tensor x0 = Tensor::matrix(a.size() / 3, 3, a), x1 = Tensor::matrix(b.size() / 3, 3, b);
  SpnnConfig sc;
  sc.layers = 4;
  sc.width = 32;
  sc.train = {1e-3, 0.0, 2000, 64, 0.05};
  const Spnn net(sc, 3);
  ParameterSet ps;
  net.init(ps, rng, x0);
  train_spnn(ps, net, x0, x1, dt, sc.train, rng);

  // Held-out initial conditions, rolled out without any correction from the reference.
  double worst_err = 0.0, worst_deg = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto tr = sys.trajectory(initial(), dt, steps);
    Eigen::Vector3d x = tr[0].vec();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 1; i <= steps; ++i) {
      const Tensor p = net.operators(ps, Tensor::matrix(1, 3, {x(0), x(1), x(2)}));
      const auto ops = metriplectic::unpack_operators(std::span<const double>(p.data(), p.size()), 3);
      const auto r = metriplectic::degeneracy_residual(ops);
      worst_deg = std::max(worst_deg, (r.r_L + r.r_M) / (ops.DE.squaredNorm() + ops.DS.squaredNorm()));
      x = metriplectic::euler_step(x, ops, dt);
      num += (x - tr[i].vec()).squaredNorm();
      den += tr[i].vec().squaredNorm();
    }
    worst_err = std::max(worst_err, std::sqrt(num / den));
  }
  out.check(worst_err <= 0.05, "SPNN 100-step rel L2 " + fmt("%.4f", worst_err));
  out.check(worst_deg <= 1e-3, "normalized degeneracy " + fmt("%.2e", worst_deg));
}

// ----------------------------------------------------------- source pipeline

std::vector<SloshDataset> recordings(double viscosity_scale, double dt, const std::vector<double>& impulses) {
  std::vector<SloshDataset> out;
  for (double imp : impulses) {
    SloshConfig c;
    c.impulse = imp;
    c.dt = dt;
    c.fluid.viscosity_scale = viscosity_scale;
    out.push_back(slosh_generate(c));
  }
  return out;
}

// Shared by the source and correction criteria: the correction starts from this model.
std::optional<LearnedSimulator> source_model;

void source_pipeline(Outcome& out) {
  PipelineConfig cfg = desk_profile();
  cfg.seed = 7;
  const auto data = recordings(1.0, 0.005, source_impulses());
  out.check(data.front().snapshots() == 750 && data.front().group("q").dim == 200,
            std::to_string(data.size()) + "x" + std::to_string(data.front().snapshots()) + " snapshots");
  LearnedSimulator sim = make_simulator(cfg, data);
  const auto split = split_windows(data, cfg.gru.window, cfg.train_fraction, cfg.seed);
  const auto ae_hist = train_ae_stage(sim, data, split);
  const auto gru_hist = train_gru_stage(sim, data, split);
  const auto spnn_hist = train_spnn_stage(sim, data, split);

  const auto rel = reconstruction_errors(sim, data, split.test);
  double worst_ae = 0.0;
  std::string per_group;
  for (std::size_t g = 0; g < rel.size(); ++g) {
    worst_ae = std::max(worst_ae, rel[g]);
    per_group += (g ? " " : "") + sim.groups[g] + "=" + fmt("%.4f", rel[g]);
  }
  out.check(worst_ae <= 0.02, "AE rel err " + per_group);
  const auto em = encoder_metrics(sim, data, split.test);
  out.check(em.mse <= 10.0 * em.variance_floor, "GRU mse/floor " + fmt("%.3f", em.mse / em.variance_floor));
  const auto surf = one_step_surface_errors(sim, data, split.test, sim.dt, "test");
  out.check(surf.mean() <= 0.05, "surface err mean " + fmt("%.4f", surf.mean()) + " max " + fmt("%.4f", surf.max()));

  double worst_drop = std::numeric_limits<double>::infinity();
  auto drop = [&](const std::vector<double>& h) {
    if (!h.empty()) worst_drop = std::min(worst_drop, h.front() / h.back());
  };
  for (const auto& h : ae_hist.train) drop(h);
  drop(gru_hist);
  drop(spnn_hist);
  out.check(worst_drop >= 10.0, "smallest loss drop " + fmt("%.0f", worst_drop) + "x");
  source_model = std::move(sim);
}

// ---------------------------------------------------------------- correction

void correction(Outcome& out) {
  if (!source_model) {
    std::fprintf(stderr, "correction needs the source model; running the source pipeline first\n");
    Outcome ignored;
    source_pipeline(ignored);
  }
  LearnedSimulator sim = *source_model;
  const double dt = 0.015;
  const auto target = recordings(0.3, dt, source_impulses());
  const auto held_out = recordings(0.3, dt, {0.05});
  const std::size_t w = sim.encoder.window();
  const auto split = split_windows(target, w, 0.8, 11);
  const auto held_refs = all_windows(held_out, w, 1);
  const CorrectionConfig cc = computational_correction();

  auto total_reward = [&] {
    Tape t(false);
    const auto steps = window_steps(target, split.train, w);
    const Tensor z = surface_heights(gather_group(target, split.train, kSurfaceGroup, 1));
    return window_reward(t, sim, target, split.train, steps, z, cc.lambda).total.value().item();
  };
  const auto pre_val = one_step_surface_errors(sim, target, split.test, dt, "validation");
  const auto pre_held = one_step_surface_errors(sim, held_out, held_refs, dt, "held-out");
  const double pre_reward = total_reward();
  const LearnedSimulator before = sim;

  const auto res = correct(sim, target, split.train, split.test, cc, 3);

  const auto post_val = one_step_surface_errors(sim, target, split.test, dt, "validation");
  const auto post_held = one_step_surface_errors(sim, held_out, held_refs, dt, "held-out");
  const double post_reward = total_reward();
  for (const auto& [name, pre, post] :
       {std::tuple{"validation", &pre_val, &post_val}, std::tuple{"held-out", &pre_held, &post_held}}) {
    out.check(post->max() <= 0.5 * pre->max(),
              std::string(name) + " max " + fmt("%.4f", pre->max()) + " -> " + fmt("%.4f", post->max()));
    out.check(post->mean() <= 0.03,
              std::string(name) + " mean " + fmt("%.4f", pre->mean()) + " -> " + fmt("%.4f", post->mean()));
  }
  out.check(pre_reward >= 2.0 * post_reward, "reward " + fmt("%.3e", pre_reward) + " -> " + fmt("%.3e", post_reward));

  bool frozen_same = bytes(sim.ae) == bytes(before.ae);
  std::size_t moved = 0;
  const std::set<std::string> tail_prefixes{"gru.l" + std::to_string(sim.encoder.cells.size() - 1) + ".", "gru.head."};
  for (const auto& e : before.gru.entries()) {
    bool trainable = false;
    for (const auto& p : tail_prefixes) trainable |= e.name.rfind(p, 0) == 0;
    const bool same = sim.gru.at(e.name).values() == e.value.values();
    frozen_same &= trainable || same;
    moved += !same;
  }
  const std::size_t layers = sim.spnn.net.layers.size();
  for (const auto& e : before.sp.entries()) {
    bool trainable = false;
    for (std::size_t l = layers - cc.spnn_unfrozen; l < layers; ++l)
      trainable |= e.name.rfind("spnn.l" + std::to_string(l) + ".", 0) == 0;
    const bool same = sim.sp.at(e.name).values() == e.value.values();
    frozen_same &= trainable || same;
    moved += !same;
  }
  out.check(frozen_same && moved > 0, "decoder and frozen layers bit-identical, " + std::to_string(moved) +
                                          " tail tensors updated, best epoch " + std::to_string(res.best_epoch));
}

// ---------------------------------------------------------------- perception

void perception(Outcome& out) {
  Rng rng(17);
  CameraModel cam = CameraModel::pinhole(615.0, 612.0, 319.5, 239.5);
  cam.R = Eigen::AngleAxisd(0.3, Eigen::Vector3d(0.2, 1.0, -0.4).normalized()).toRotationMatrix();
  cam.t = Eigen::Vector3d(0.05, -0.02, 0.6);
  cam.validate();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Eigen::Vector3d pc(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2), rng.uniform(0.2, 2.0));
    const Eigen::Vector3d pw = cam.R.transpose() * (pc - cam.t);
    const Eigen::Vector2d uv = project(pw, cam);
    worst = std::max(worst, (unproject(uv.x(), uv.y(), pc.z(), cam) - pw).norm());
  }
  out.check(worst <= 1e-9, "round trip " + fmt("%.2e", worst) + " m");

  const std::size_t w = 640, h = 480;
  GrayFrame f{w, h, std::vector<std::uint8_t>(w * h)};
  auto line = [](double c) { return 150.0 + 0.37 * c; };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) f.pixels[r * w + c] = static_cast<double>(r) >= line(c) ? 20 : 230;
  const auto px = extract_surface(f, 128);
  double row_err = px.size() == w ? 0.0 : std::numeric_limits<double>::infinity();
  for (const auto& p : px) row_err = std::max(row_err, std::fabs(static_cast<double>(p.row) - line(p.col)));
  out.check(row_err <= 1.0, "tilted interface " + fmt("%.2f", row_err) + " rows");

  // Piecewise-linear profiles whose kinks sit on stations are reproduced exactly.
  double resample_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 21;
    const auto st = stations(0.0, 0.1, n);
    std::vector<double> knot_y;
    for (std::size_t k = 0; k < n; ++k) knot_y.push_back(rng.uniform(0.03, 0.07));
    std::vector<SurfacePoint> pts;
    for (std::size_t k = 0; k < n; ++k) pts.push_back({st[k], knot_y[k]});
    rng.shuffle(pts);
    const auto r = resample_surface(pts, n);
    for (std::size_t k = 0; k < n; ++k) resample_err = std::max(resample_err, std::fabs(r.points[k].y - knot_y[k]));
  }
  out.check(resample_err == 0.0, "resampler max err " + fmt("%g", resample_err));
}

// --------------------------------------------------------------- determinism

struct TinyRun {
  std::vector<unsigned char> dataset, ae, gru, sp;
  std::string reward_csv, error_csv;
};

TinyRun tiny_run() {
  TinyRun out;
  std::vector<SloshDataset> data;
  for (double imp : {0.03, -0.05}) {
    SloshConfig c;
    c.columns = 20;
    c.stations = 5;
    c.duration = 0.2;
    c.impulse = imp;
    c.surface_noise = 1e-4;
    c.seed = 9;
    data.push_back(slosh_generate(c));
  }
  out.dataset = encode_dataset(data.front());
  PipelineConfig p;
  for (const char* g : {"q", "v", "e", "sigma", "tau"})
    p.reduction.groups.push_back({g, {8}, 2, 0.001, {3e-3, 1e-6, 20, 32, 1.0}});
  p.reduction.latent_dim = 5;
  p.reduction.finetune_epochs = 5;
  p.gru = {2, 6, 4, {3e-3, 1e-6, 10, 32, 1.0}};
  p.spnn.layers = 3;
  p.spnn.width = 16;
  p.spnn.train = {1e-3, 1e-6, 10, 32, 1.0};
  p.seed = 5;
  LearnedSimulator sim = make_simulator(p, data);
  const auto split = split_windows(data, p.gru.window, 0.8, p.seed);
  train_ae_stage(sim, data, split);
  train_gru_stage(sim, data, split);
  train_spnn_stage(sim, data, split);
  CorrectionConfig cc;
  cc.epochs = 5;
  cc.lr = 1e-3;
  cc.spnn_unfrozen = 2;
  const auto res = correct(sim, data, split.train, split.test, cc, 2);
  out.ae = bytes(sim.ae);
  out.gru = bytes(sim.gru);
  out.sp = bytes(sim.sp);
  out.reward_csv = reward_csv(res.train);
  out.error_csv = error_csv({one_step_surface_errors(sim, data, split.test, sim.dt, "test")});
  return out;
}

void determinism(Outcome& out) {
  const TinyRun a = tiny_run(), b = tiny_run();
  out.check(a.dataset == b.dataset, "datasets identical");
  out.check(a.ae == b.ae && a.gru == b.gru && a.sp == b.sp, "checkpoints identical");
  out.check(a.reward_csv == b.reward_csv && a.error_csv == b.error_csv, "CSVs identical");

  const auto dir = std::filesystem::temp_directory_path() / "gsnn_acceptance";
  std::filesystem::create_directories(dir);
  const std::string ds_path = (dir / "data.gsl").string(), ck_path = (dir / "gru.gsnn").string();
  const SloshDataset ds = decode_dataset(a.dataset);
  write_dataset(ds_path, ds);
  const ParameterSet ps = decode_checkpoint(a.gru);
  save_checkpoint(ps, ck_path);
  out.check(encode_dataset(read_dataset(ds_path)) == a.dataset && io::read_file(ds_path) == a.dataset &&
                bytes(load_checkpoint(ck_path)) == a.gru && io::read_file(ck_path) == a.gru,
            "file round trips bit-exact");

  auto rejected = [](auto decode, std::vector<unsigned char> b) {
    b[0] ^= 0x20;
    try {
      decode(b);
    } catch (const io::FormatError&) {
      return true;
    }
    return false;
  };
  out.check(rejected([](auto b) { return decode_dataset(b); }, a.dataset) &&
                rejected([](auto b) { return decode_checkpoint(b); }, a.gru),
            "corrupted magic rejected");
  std::filesystem::remove_all(dir);
}

struct Criterion {
  const char* name;
  double budget_s;
  void (*run)(Outcome&);
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion all[] = {
      {"structural invariants", 10, structural},      {"gradient correctness", 60, gradients},
      {"thermodynamic oracle", 600, oscillator},      {"end-to-end source pipeline", 1800, source_pipeline},
      {"correction efficacy", 1200, correction},      {"perception geometry", 10, perception},
      {"determinism and formats", 60, determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (int i = 0; i < static_cast<int>(std::size(all)); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto& c = all[i];
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    out.check(secs <= c.budget_s, fmt("%.1f s", secs) + " of " + fmt("%.0f s", c.budget_s));
    std::printf("%s [%d] %s: %s\n", out.pass ? "PASS" : "FAIL", i + 1, c.name, out.detail.str().c_str());
    std::fflush(stdout);
    failures += !out.pass;
  }
  return failures == 0 ? 0 : 1;
}
