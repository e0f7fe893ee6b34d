#pragma once

#include "gsnn/metriplectic.hpp"
#include "gsnn/params.hpp"
#include "gsnn/surface.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn {

// ---------------------------------------------------------------- rheology

/// Herschel-Bulkley fluid: τ = k γⁿ + τ0.
struct Rheology {
  double k = 0.950;   ///< consistency index, Pa·sⁿ
  double n = 1.0;     ///< flow index
  double tau0 = 0.0;  ///< yield stress, Pa

  void validate() const {
    if (!(k >= 0.0) || !(n > 0.0) || !(tau0 >= 0.0))
      throw std::invalid_argument("rheology: need k >= 0, n > 0, tau0 >= 0");
  }
};

inline double herschel_bulkley(double gamma, const Rheology& r) {
  if (!(gamma >= 0.0)) throw std::invalid_argument("herschel_bulkley: shear rate must be >= 0");
  return r.k * std::pow(gamma, r.n) + r.tau0;
}

/// Apparent viscosity τ(γ_c)/γ_c, Pa·s.
inline double apparent_viscosity(const Rheology& r, double gamma_c) {
  if (!(gamma_c > 0.0)) throw std::invalid_argument("characteristic shear rate must be > 0");
  return herschel_bulkley(gamma_c, r) / gamma_c;
}

struct FluidParams {
  std::string name = "glycerine";
  Rheology rheology;
  double density = 1261.0;       ///< kg/m³
  double shear_rate = 1.0;       ///< characteristic shear rate for the effective viscosity, 1/s
  double viscosity_scale = 1.0;  ///< multiplies the effective viscosity

  /// Effective kinematic viscosity ν, m²/s.
  double kinematic_viscosity() const { return viscosity_scale * apparent_viscosity(rheology, shear_rate) / density; }

  void validate() const {
    rheology.validate();
    if (!(density > 0.0) || !(shear_rate > 0.0) || !(viscosity_scale >= 0.0))
      throw std::invalid_argument("fluid '" + name + "': density, shear rate must be > 0 and viscosity scale >= 0");
  }
};

inline const std::vector<FluidParams>& fluid_presets() {
  static const std::vector<FluidParams> presets = {
      {"glycerine", {0.950, 1.0, 0.0}, 1261.0},
      {"water", {0.001, 1.0, 0.0}, 1000.0},
      {"blood", {0.017, 0.708, 0.0}, 1060.0},
      {"honey", {10.0, 1.0, 0.0}, 1420.0},
      {"ketchup", {18.7, 0.27, 32.0}, 1150.0},
  };
  return presets;
}

inline FluidParams fluid_preset(const std::string& name) {
  for (const auto& f : fluid_presets())
    if (f.name == name) return f;
  std::string known;
  for (const auto& f : fluid_presets()) known += (known.empty() ? "" : ", ") + f.name;
  throw std::invalid_argument("unknown fluid '" + name + "' (known: " + known + ")");
}

// ------------------------------------------------------ thermal oscillator

struct OscillatorState {
  double q = 0.0;
  double p = 0.0;
  double T = 1.0;

  Eigen::Vector3d vec() const { return {q, p, T}; }
  static OscillatorState from(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }
};

/// Mass-spring oscillator whose friction heats a thermal reservoir.
struct OscillatorSystem {
  double m = 1.0;
  double k_spring = 1.0;
  double d = 0.1;
  double C = 1.0;
  double T_ref = 1.0;

  void validate() const {
    if (!(m > 0.0) || !(k_spring > 0.0) || !(C > 0.0) || !(T_ref > 0.0) || !(d >= 0.0))
      throw std::invalid_argument("oscillator: need m, k_spring, C, T_ref > 0 and d >= 0");
  }

  double energy(const OscillatorState& s) const { return s.p * s.p / (2.0 * m) + 0.5 * k_spring * s.q * s.q + C * s.T; }
  double entropy(const OscillatorState& s) const { return C * std::log(s.T / T_ref); }

  Eigen::Vector3d rate(const OscillatorState& s) const {
    return {s.p / m, -k_spring * s.q - d * s.p / (m * s.T), d * s.p * s.p / (m * m * C * s.T)};
  }

  metriplectic::GenericOperators operators(const OscillatorState& s) const {
    if (!(s.T > 0.0)) throw std::invalid_argument("oscillator: temperature must be > 0");
    metriplectic::GenericOperators ops;
    ops.L = Eigen::Matrix3d::Zero();
    ops.L(0, 1) = 1.0;
    ops.L(1, 0) = -1.0;
    const Eigen::Vector3d w(0.0, 1.0, -s.p / (m * C));
    ops.M = d * w * w.transpose();
    ops.DE = Eigen::Vector3d(k_spring * s.q, s.p / m, C);
    ops.DS = Eigen::Vector3d(0.0, 0.0, C / s.T);
    return ops;
  }

  /// Reference step: classical RK4 with `substeps` substeps.
  OscillatorState step_exact(const OscillatorState& s0, double dt, int substeps = 100) const {
    if (!(s0.T > 0.0)) throw std::invalid_argument("oscillator: temperature must be > 0");
    Eigen::Vector3d y = s0.vec();
    const double h = dt / substeps;
    auto f = [&](const Eigen::Vector3d& v) { return rate(OscillatorState::from(v)); };
    for (int i = 0; i < substeps; ++i) {
      const Eigen::Vector3d k1 = f(y);
      const Eigen::Vector3d k2 = f(y + 0.5 * h * k1);
      const Eigen::Vector3d k3 = f(y + 0.5 * h * k2);
      const Eigen::Vector3d k4 = f(y + h * k3);
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!(y(2) > 0.0) || !y.allFinite()) throw std::runtime_error("oscillator: reference step left the admissible region");
    return OscillatorState::from(y);
  }

  std::vector<OscillatorState> trajectory(const OscillatorState& s0, double dt, std::size_t steps) const {
    std::vector<OscillatorState> out{s0};
    for (std::size_t i = 0; i < steps; ++i) out.push_back(step_exact(out.back(), dt));
    return out;
  }
};

// ----------------------------------------------------- shallow-water slosh

/// Full-field group names in canonical order.
inline const std::array<std::string, 5>& state_groups() {
  static const std::array<std::string, 5> g = {"q", "v", "e", "sigma", "tau"};
  return g;
}

inline const std::string kSurfaceGroup = "surface";

struct NamedBlock {
  std::string name;
  std::size_t dim = 0;
  std::vector<double> data;  ///< [snapshots x dim], row-major

  std::size_t snapshots() const { return dim ? data.size() / dim : 0; }
  const double* row(std::size_t i) const { return data.data() + i * dim; }
};

/// A sequence of full-field snapshots plus surface observations.
struct SloshDataset {
  double dt = 0.005;
  std::vector<NamedBlock> groups;  ///< state groups followed by the "surface" group

  // Metadata carried in the sidecar manifest.
  FluidParams fluid;
  double impulse = 0.0;
  std::uint64_t seed = 0;
  double tank_length = 0.0;
  double depth = 0.0;

  std::size_t snapshots() const { return groups.empty() ? 0 : groups.front().snapshots(); }

  bool has(const std::string& name) const {
    return std::any_of(groups.begin(), groups.end(), [&](const NamedBlock& b) { return b.name == name; });
  }
  const NamedBlock& group(const std::string& name) const {
    for (const auto& b : groups)
      if (b.name == name) return b;
    throw std::out_of_range("dataset has no group '" + name + "'");
  }
  NamedBlock& group(const std::string& name) { return const_cast<NamedBlock&>(std::as_const(*this).group(name)); }

  SurfaceObservation surface(std::size_t i) const {
    const auto& s = group(kSurfaceGroup);
    return SurfaceObservation::unflatten(std::span<const double>(s.row(i), s.dim));
  }

  /// Snapshots [begin, end) of every group.
  SloshDataset slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > snapshots()) throw std::out_of_range("dataset slice out of range");
    SloshDataset out = *this;
    for (auto& g : out.groups) {
      g.data.assign(g.data.begin() + static_cast<std::ptrdiff_t>(begin * g.dim),
                    g.data.begin() + static_cast<std::ptrdiff_t>(end * g.dim));
    }
    return out;
  }

  void validate() const {
    if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dataset: dt must be finite and >= 0");
    for (const auto& g : groups) {
      if (g.dim == 0 || g.data.size() % g.dim != 0)
        throw std::invalid_argument("dataset: group '" + g.name + "' payload is not a whole number of snapshots");
      if (g.snapshots() != snapshots())
        throw std::invalid_argument("dataset: group '" + g.name + "' snapshot count differs");
    }
  }
};

struct SloshConfig {
  FluidParams fluid;
  double impulse = 0.05;       ///< peak initial velocity, m/s
  double duration = 3.75;      ///< s
  double dt = 0.005;           ///< output interval, s
  std::size_t columns = 200;   ///< finite-volume cells
  std::size_t stations = 21;   ///< surface observation points
  double tank_length = 0.1;    ///< m
  double depth = 0.05;         ///< rest depth, m
  double gravity = 9.81;
  double cfl = 0.45;           ///< Courant number for automatic substeps
  double max_cfl = 0.9;        ///< hard limit when internal_dt is fixed
  double internal_dt = 0.0;    ///< 0 = choose substeps automatically
  double surface_noise = 0.0;  ///< std of additive height noise on observations, m
  std::uint64_t seed = 0;
  std::size_t min_snapshots = 16;

  std::size_t snapshot_count() const { return static_cast<std::size_t>(std::llround(duration / dt)); }
};

/// Impulse amplitudes of the source training recordings, m/s. Alternating
/// signs so both slosh directions are seen.
inline std::vector<double> source_impulses() { return {0.03, -0.045, 0.06, -0.075}; }

/// Raised when a fixed internal step violates the CFL limit.
class CflError : public std::runtime_error {
 public:
  CflError(const std::string& what, double suggested) : std::runtime_error(what), suggested_dt(suggested) {}
  double suggested_dt;
};

namespace detail {

struct SweState {
  std::vector<double> h, m, heat;
};

inline double minmod(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::fabs(a) < std::fabs(b) ? a : b;
}

// MUSCL-Rusanov flux divergence with mirrored ghost cells at both walls.
inline void swe_rhs(const std::vector<double>& h, const std::vector<double>& m, double g, double dx,
                    std::vector<double>& dh, std::vector<double>& dm, double& max_speed) {
  const std::size_t n = h.size();
  // Two ghost cells each side: mirror h, negate m.
  std::vector<double> H(n + 4), Q(n + 4);
  for (std::size_t i = 0; i < n; ++i) {
    H[i + 2] = h[i];
    Q[i + 2] = m[i];
  }
  H[1] = h[0], Q[1] = -m[0], H[0] = h[std::min<std::size_t>(1, n - 1)], Q[0] = -m[std::min<std::size_t>(1, n - 1)];
  H[n + 2] = h[n - 1], Q[n + 2] = -m[n - 1];
  H[n + 3] = h[n >= 2 ? n - 2 : 0], Q[n + 3] = -m[n >= 2 ? n - 2 : 0];

  std::vector<double> sh(n + 4, 0.0), sq(n + 4, 0.0);
  for (std::size_t i = 1; i + 1 < n + 4; ++i) {
    sh[i] = minmod(H[i] - H[i - 1], H[i + 1] - H[i]);
    sq[i] = minmod(Q[i] - Q[i - 1], Q[i + 1] - Q[i]);
  }
  max_speed = 0.0;
  std::vector<double> fh(n + 1), fm(n + 1);
  for (std::size_t f = 0; f <= n; ++f) {
    const std::size_t l = f + 1, r = f + 2;  // padded indices left/right of face f
    const double hl = H[l] + 0.5 * sh[l], ql = Q[l] + 0.5 * sq[l];
    const double hr = H[r] - 0.5 * sh[r], qr = Q[r] - 0.5 * sq[r];
    if (!(hl > 0.0) || !(hr > 0.0)) throw std::runtime_error("shallow water: non-positive depth (impulse too strong)");
    const double ul = ql / hl, ur = qr / hr;
    const double a = std::max(std::fabs(ul) + std::sqrt(g * hl), std::fabs(ur) + std::sqrt(g * hr));
    max_speed = std::max(max_speed, a);
    fh[f] = 0.5 * (ql + qr) - 0.5 * a * (hr - hl);
    fm[f] = 0.5 * (ql * ul + 0.5 * g * hl * hl + qr * ur + 0.5 * g * hr * hr) - 0.5 * a * (qr - ql);
  }
  // Walls carry no mass; the mirrored states make fh[0] and fh[n] vanish up to roundoff,
  // so pin them to keep the volume exactly conserved.
  fh[0] = 0.0;
  fh[n] = 0.0;
  dh.resize(n);
  dm.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    dh[i] = -(fh[i + 1] - fh[i]) / dx;
    dm[i] = -(fm[i + 1] - fm[i]) / dx;
  }
}

inline double max_wave_speed(const SweState& s, double g) {
  double a = 0.0;
  for (std::size_t i = 0; i < s.h.size(); ++i)
    a = std::max(a, std::fabs(s.m[i] / s.h[i]) + std::sqrt(g * s.h[i]));
  return a;
}

// Implicit viscous step: bottom friction -3νu/h and horizontal diffusion ∂x(νh∂x u).
// Kinetic energy removed per column is added to its heat.
inline void viscous_step(SweState& s, double nu, double dx, double dt, double rho) {
  const std::size_t n = s.h.size();
  if (nu == 0.0) return;
  std::vector<double> a(n, 0.0), b(n), c(n, 0.0), rhs(n);
  const double r = nu * dt / (dx * dx);
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = s.h[i] + 3.0 * nu * dt / s.h[i];
    rhs[i] = s.m[i];
    if (i > 0) {
      const double hf = 0.5 * (s.h[i] + s.h[i - 1]);
      a[i] = -r * hf;
      b[i] += r * hf;
    }
    if (i + 1 < n) {
      const double hf = 0.5 * (s.h[i] + s.h[i + 1]);
      c[i] = -r * hf;
      b[i] += r * hf;
    }
  }
  // Thomas algorithm for u.
  std::vector<double> cp(n), dp(n), u(n);
  cp[0] = c[0] / b[0];
  dp[0] = rhs[0] / b[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double den = b[i] - a[i] * cp[i - 1];
    cp[i] = c[i] / den;
    dp[i] = (rhs[i] - a[i] * dp[i - 1]) / den;
  }
  u[n - 1] = dp[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) u[i] = dp[i] - cp[i] * u[i + 1];
  for (std::size_t i = 0; i < n; ++i) {
    const double ke_old = 0.5 * rho * s.m[i] * s.m[i] / s.h[i];
    s.m[i] = s.h[i] * u[i];
    const double ke_new = 0.5 * rho * s.m[i] * s.m[i] / s.h[i];
    s.heat[i] += ke_old - ke_new;
  }
}

}  // namespace detail

/// Column heights → surface observation at the configured stations.
inline SurfaceObservation column_surface(std::span<const double> heights, double tank_length, std::size_t stations) {
  const std::size_t n = heights.size();
  if (n == 0) throw std::invalid_argument("surface extraction: empty field");
  std::vector<SurfacePoint> pts(n);
  const double dx = tank_length / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = {(static_cast<double>(i) + 0.5) * dx, heights[i]};
  return resample_surface(std::move(pts), stations);
}

/// 1-D shallow-water sloshing in a closed box, started from the velocity
/// profile u(x) = impulse·sin(πx/L) over a flat surface.
inline SloshDataset slosh_generate(const SloshConfig& cfg) {
  cfg.fluid.validate();
  const std::size_t snaps = cfg.snapshot_count();
  if (!(cfg.dt > 0.0) || !(cfg.duration > 0.0)) throw std::invalid_argument("slosh: dt and duration must be > 0");
  if (snaps < cfg.min_snapshots)
    throw std::invalid_argument("slosh: duration/dt gives " + std::to_string(snaps) + " snapshots, need at least " +
                                std::to_string(cfg.min_snapshots));
  if (cfg.stations < 2 || cfg.columns < cfg.stations)
    throw std::invalid_argument("slosh: need columns >= stations >= 2");
  if (!(cfg.depth > 0.0) || !(cfg.tank_length > 0.0)) throw std::invalid_argument("slosh: tank size must be > 0");

  const std::size_t n = cfg.columns;
  const double dx = cfg.tank_length / static_cast<double>(n);
  const double g = cfg.gravity, rho = cfg.fluid.density;
  const double nu = cfg.fluid.kinematic_viscosity();
  const double pi = std::acos(-1.0);

  detail::SweState s{std::vector<double>(n, cfg.depth), std::vector<double>(n), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    s.m[i] = cfg.depth * cfg.impulse * std::sin(pi * (static_cast<double>(i) + 0.5) * dx / cfg.tank_length);

  SloshDataset ds;
  ds.dt = cfg.dt;
  ds.fluid = cfg.fluid;
  ds.impulse = cfg.impulse;
  ds.seed = cfg.seed;
  ds.tank_length = cfg.tank_length;
  ds.depth = cfg.depth;
  for (const auto& name : state_groups()) ds.groups.push_back({name, n, {}});
  ds.groups.push_back({kSurfaceGroup, 2 * cfg.stations, {}});
  for (auto& b : ds.groups) b.data.reserve(b.dim * snaps);

  Rng rng(cfg.seed);
  auto emit = [&]() {
    auto& q = ds.groups[0].data;
    auto& v = ds.groups[1].data;
    auto& e = ds.groups[2].data;
    auto& sg = ds.groups[3].data;
    auto& tau = ds.groups[4].data;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = s.h[i], u = s.m[i] / h;
      q.push_back(h);
      v.push_back(u);
      e.push_back(0.5 * rho * g * h * h + s.heat[i]);
      sg.push_back(rho * g * h);
      const double shear = 3.0 * std::fabs(u) / h;
      tau.push_back(shear > 0.0 ? std::copysign(herschel_bulkley(shear, cfg.fluid.rheology), u) : 0.0);
    }
    std::vector<double> heights = s.h;
    if (cfg.surface_noise > 0.0)
      for (auto& h : heights) h += cfg.surface_noise * rng.normal();
    for (double c : column_surface(heights, cfg.tank_length, cfg.stations).flatten())
      ds.groups[5].data.push_back(c);
  };

  std::vector<double> dh1, dm1, dh2, dm2;
  emit();
  for (std::size_t k = 1; k < snaps; ++k) {
    std::size_t sub;
    const double speed = detail::max_wave_speed(s, g);
    if (cfg.internal_dt > 0.0) {
      const double courant = speed * cfg.internal_dt / dx;
      if (courant > cfg.max_cfl)
        throw CflError("slosh: internal step " + std::to_string(cfg.internal_dt) + " s gives Courant number " +
                           std::to_string(courant) + " > " + std::to_string(cfg.max_cfl) + "; use internal_dt <= " +
                           std::to_string(cfg.cfl * dx / speed),
                       cfg.cfl * dx / speed);
      sub = static_cast<std::size_t>(std::ceil(cfg.dt / cfg.internal_dt - 1e-9));
    } else {
      sub = static_cast<std::size_t>(std::ceil(cfg.dt * speed / (cfg.cfl * dx)));
    }
    sub = std::max<std::size_t>(sub, 1);
    const double h_sub = cfg.dt / static_cast<double>(sub);
    for (std::size_t j = 0; j < sub; ++j) {
      // SSP-RK2 for the hyperbolic part.
      double a1 = 0.0, a2 = 0.0;
      detail::swe_rhs(s.h, s.m, g, dx, dh1, dm1, a1);
      if (a1 * h_sub / dx > cfg.max_cfl)
        throw CflError("slosh: Courant number exceeded during substep; use internal_dt <= " +
                           std::to_string(cfg.cfl * dx / a1),
                       cfg.cfl * dx / a1);
      std::vector<double> h1(n), m1(n);
      for (std::size_t i = 0; i < n; ++i) {
        h1[i] = s.h[i] + h_sub * dh1[i];
        m1[i] = s.m[i] + h_sub * dm1[i];
      }
      detail::swe_rhs(h1, m1, g, dx, dh2, dm2, a2);
      for (std::size_t i = 0; i < n; ++i) {
        const double h_new = 0.5 * (s.h[i] + h1[i] + h_sub * dh2[i]);
        const double m_new = 0.5 * (s.m[i] + m1[i] + h_sub * dm2[i]);
        s.h[i] = h_new;
        s.m[i] = m_new;
      }
      detail::viscous_step(s, nu, dx, h_sub, rho);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(s.h[i]) || !std::isfinite(s.m[i]) || !(s.h[i] > 0.0))
        throw std::runtime_error("slosh: solver left the admissible region at snapshot " + std::to_string(k));
    emit();
  }
  return ds;
}

}  // namespace gsnn
