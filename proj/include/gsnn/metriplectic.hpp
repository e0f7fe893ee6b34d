#pragma once

#include "gsnn/ops.hpp"
#include "gsnn/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnn::metriplectic {

/// (L, M, DE, DS) for one state. L is skew-symmetric and M is symmetric PSD.
struct GenericOperators {
  Eigen::MatrixXd L;
  Eigen::MatrixXd M;
  Eigen::VectorXd DE;
  Eigen::VectorXd DS;

  std::size_t dim() const { return static_cast<std::size_t>(DE.size()); }
};

/// Raw factors behind a packed operator vector: L = A - Aᵀ with A strictly
/// lower triangular, M = B Bᵀ with B lower triangular.
struct OperatorFactors {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd DE;
  Eigen::VectorXd DS;
};

inline std::size_t skew_size(std::size_t d) { return d * (d - 1) / 2; }
inline std::size_t factor_size(std::size_t d) { return d * (d + 1) / 2; }

/// d(d-1)/2 + d(d+1)/2 + 2d; 195 for d = 13.
inline std::size_t packed_size(std::size_t d) { return skew_size(d) + factor_size(d) + 2 * d; }

/// Inverse of packed_size; throws if `n` is not a valid packed length.
inline std::size_t dim_for_packed(std::size_t n) {
  for (std::size_t d = 1; packed_size(d) <= n; ++d)
    if (packed_size(d) == n) return d;
  throw std::invalid_argument("no latent dimension has packed operator length " + std::to_string(n));
}

inline void check_packed(std::size_t got, std::size_t d) {
  if (got != packed_size(d))
    throw std::invalid_argument("packed operators: expected length " + std::to_string(packed_size(d)) + " for d=" +
                                std::to_string(d) + ", got " + std::to_string(got));
}

inline OperatorFactors unpack_factors(std::span<const double> p, std::size_t d) {
  check_packed(p.size(), d);
  const auto n = static_cast<Eigen::Index>(d);
  OperatorFactors f{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  std::size_t k = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) f.A(i, j) = p[k++];
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) f.B(i, j) = p[k++];
  for (Eigen::Index i = 0; i < n; ++i) f.DE(i) = p[k++];
  for (Eigen::Index i = 0; i < n; ++i) f.DS(i) = p[k++];
  return f;
}

inline std::vector<double> pack(const OperatorFactors& f) {
  const auto n = f.DE.size();
  std::vector<double> p;
  p.reserve(packed_size(static_cast<std::size_t>(n)));
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) p.push_back(f.A(i, j));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) p.push_back(f.B(i, j));
  for (Eigen::Index i = 0; i < n; ++i) p.push_back(f.DE(i));
  for (Eigen::Index i = 0; i < n; ++i) p.push_back(f.DS(i));
  return p;
}

inline GenericOperators assemble(const OperatorFactors& f) {
  GenericOperators ops;
  ops.L = f.A - f.A.transpose();
  ops.M = f.B * f.B.transpose();
  ops.M = (0.5 * (ops.M + ops.M.transpose())).eval();  // exact symmetry despite GEMM rounding
  ops.DE = f.DE;
  ops.DS = f.DS;
  return ops;
}

inline GenericOperators unpack_operators(std::span<const double> p, std::size_t d) {
  return assemble(unpack_factors(p, d));
}

inline void check_dims(const GenericOperators& ops, Eigen::Index d) {
  if (ops.L.rows() != d || ops.L.cols() != d || ops.M.rows() != d || ops.M.cols() != d || ops.DE.size() != d ||
      ops.DS.size() != d)
    throw std::invalid_argument("generic operators: dimensions disagree with d=" + std::to_string(d));
}

/// Right-hand side L·DE + M·DS.
inline Eigen::VectorXd generic_rate(const GenericOperators& ops) {
  check_dims(ops, ops.DE.size());
  return ops.L * ops.DE + ops.M * ops.DS;
}

/// Raised when a latent update leaves the finite range.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// x + Δt (L·DE + M·DS).
inline Eigen::VectorXd euler_step(const Eigen::VectorXd& x, const GenericOperators& ops, double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw std::invalid_argument("euler_step: time step must be >= 0 and finite");
  check_dims(ops, x.size());
  Eigen::VectorXd next = x + dt * generic_rate(ops);
  if (!next.allFinite()) throw DivergenceError("euler_step: non-finite latent state");
  return next;
}

struct DegeneracyResidual {
  double r_L = 0.0;  ///< ‖L·DS‖²
  double r_M = 0.0;  ///< ‖M·DE‖²
};

inline DegeneracyResidual degeneracy_residual(const GenericOperators& ops) {
  check_dims(ops, ops.DE.size());
  return {(ops.L * ops.DS).squaredNorm(), (ops.M * ops.DE).squaredNorm()};
}

struct ThermoRates {
  double energy_rate = 0.0;   ///< DEᵀ(L·DE + M·DS)
  double entropy_rate = 0.0;  ///< DSᵀ(L·DE + M·DS)
};

inline ThermoRates thermo_rates(const GenericOperators& ops) {
  const Eigen::VectorXd f = generic_rate(ops);
  return {ops.DE.dot(f), ops.DS.dot(f)};
}

namespace detail {

// Scratch for per-row evaluation of packed operators.
struct RowWork {
  explicit RowWork(std::size_t d)
      : n(static_cast<Eigen::Index>(d)),
        L(Eigen::MatrixXd::Zero(n, n)),
        B(Eigen::MatrixXd::Zero(n, n)),
        M(n, n),
        DE(n),
        DS(n) {}

  void load(const double* p) {
    std::size_t k = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j) {
        L(i, j) = p[k];
        L(j, i) = -p[k];
        ++k;
      }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) B(i, j) = p[k++];
    for (Eigen::Index i = 0; i < n; ++i) DE(i) = p[k++];
    for (Eigen::Index i = 0; i < n; ++i) DS(i) = p[k++];
    M.noalias() = B * B.transpose();
    M = (0.5 * (M + M.transpose())).eval();
  }

  // Adds dL (full matrix) to the strict-lower A segment: dA_ij = dL_ij - dL_ji.
  void add_skew_grad(double* g, const Eigen::MatrixXd& dL) const {
    std::size_t k = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j) g[k++] += dL(i, j) - dL(j, i);
  }

  // Adds dM (full matrix) to the B segment: dB = (dM + dMᵀ) B, lower part.
  void add_factor_grad(double* g, const Eigen::MatrixXd& dM) const {
    const Eigen::MatrixXd dB = (dM + dM.transpose()) * B;
    std::size_t k = skew_size(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) g[k++] += dB(i, j);
  }

  double* de_grad(double* g) const { return g + skew_size(static_cast<std::size_t>(n)) + factor_size(static_cast<std::size_t>(n)); }
  double* ds_grad(double* g) const { return de_grad(g) + n; }

  Eigen::Index n;
  Eigen::MatrixXd L, B, M;
  Eigen::VectorXd DE, DS;
};

}  // namespace detail

/// Batched Euler update on the tape: rows of x [B x d] advanced with the
/// operators packed in the matching rows of `packed` [B x packed_size(d)].
inline Var euler_update(Var x, Var packed, double dt) {
  const Tensor& xv = x.value();
  const Tensor& pv = packed.value();
  const std::size_t d = xv.cols();
  check_packed(pv.cols(), d);
  if (xv.rows() != pv.rows())
    throw std::invalid_argument("euler_update: " + xv.shape_string() + " and " + pv.shape_string() + " differ in rows");
  Tensor y = xv;
  detail::RowWork w(d);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    w.load(pv.data() + r * pv.cols());
    Eigen::Map<Eigen::VectorXd> yr(y.data() + r * d, static_cast<Eigen::Index>(d));
    yr += dt * (w.L * w.DE + w.M * w.DS);
  }
  const std::size_t xi = x.id(), pi = packed.id();
  return x.tape()->record("euler_update", std::move(y), {x, packed}, [xi, pi, d, dt](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.needs_grad(xi)) t.accumulator(xi).mat() += gy.mat();
    if (!t.needs_grad(pi)) return;
    const Tensor& pv = t.value(pi);
    Tensor& gp = t.accumulator(pi);
    detail::RowWork w(d);
    const auto n = static_cast<Eigen::Index>(d);
    for (std::size_t r = 0; r < pv.rows(); ++r) {
      w.load(pv.data() + r * pv.cols());
      const Eigen::VectorXd gd = dt * Eigen::Map<const Eigen::VectorXd>(gy.data() + r * d, n);
      double* g = gp.data() + r * pv.cols();
      w.add_skew_grad(g, gd * w.DE.transpose());
      w.add_factor_grad(g, gd * w.DS.transpose());
      Eigen::Map<Eigen::VectorXd>(w.de_grad(g), n) += w.L.transpose() * gd;
      Eigen::Map<Eigen::VectorXd>(w.ds_grad(g), n) += w.M * gd;
    }
  });
}

/// Per-row degeneracy residuals [B x 2]: column 0 is ‖L·DS‖², column 1 ‖M·DE‖².
inline Var degeneracy_terms(Var packed, std::size_t d) {
  const Tensor& pv = packed.value();
  check_packed(pv.cols(), d);
  Tensor y = Tensor::matrix(pv.rows(), 2);
  detail::RowWork w(d);
  for (std::size_t r = 0; r < pv.rows(); ++r) {
    w.load(pv.data() + r * pv.cols());
    y.at(r, 0) = (w.L * w.DS).squaredNorm();
    y.at(r, 1) = (w.M * w.DE).squaredNorm();
  }
  const std::size_t pi = packed.id();
  return packed.tape()->record("degeneracy", std::move(y), {packed}, [pi, d](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const Tensor& pv = t.value(pi);
    Tensor& gp = t.accumulator(pi);
    detail::RowWork w(d);
    const auto n = static_cast<Eigen::Index>(d);
    for (std::size_t r = 0; r < pv.rows(); ++r) {
      w.load(pv.data() + r * pv.cols());
      double* g = gp.data() + r * pv.cols();
      const Eigen::VectorXd du = 2.0 * gy.at(r, 0) * (w.L * w.DS);
      const Eigen::VectorXd dw = 2.0 * gy.at(r, 1) * (w.M * w.DE);
      w.add_skew_grad(g, du * w.DS.transpose());
      w.add_factor_grad(g, dw * w.DE.transpose());
      Eigen::Map<Eigen::VectorXd>(w.ds_grad(g), n) += w.L.transpose() * du;
      Eigen::Map<Eigen::VectorXd>(w.de_grad(g), n) += w.M * dw;
    }
  });
}

}  // namespace gsnn::metriplectic
