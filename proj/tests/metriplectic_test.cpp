#include "gsnn/datagen.hpp"
#include "gsnn/metriplectic.hpp"
#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cstring>

using namespace gsnn;
using namespace gsnn::metriplectic;

namespace {

std::vector<double> random_packed(std::size_t d, Rng& rng) {
  std::vector<double> p(packed_size(d));
  for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  return p;
}

GenericOperators ops2(Eigen::Matrix2d L, Eigen::Matrix2d M, Eigen::Vector2d DE, Eigen::Vector2d DS) {
  return {L, M, DE, DS};
}

Eigen::Matrix2d rot() { return (Eigen::Matrix2d() << 0, 1, -1, 0).finished(); }

}  // namespace

TEST(Unpack, PackedLengthIs195ForThirteen) {
  EXPECT_EQ(packed_size(13), 195u);
  EXPECT_EQ(skew_size(13) + factor_size(13), 78u + 91u);
  EXPECT_EQ(dim_for_packed(195), 13u);
  EXPECT_THROW(dim_for_packed(194), std::invalid_argument);
}

TEST(Unpack, ZeroVectorGivesZeroOperators) {
  const auto ops = unpack_operators(std::vector<double>(195, 0.0), 13);
  EXPECT_EQ(ops.L.norm(), 0.0);
  EXPECT_EQ(ops.M.norm(), 0.0);
  EXPECT_EQ(ops.DE.norm(), 0.0);
  EXPECT_EQ(ops.DS.norm(), 0.0);
}

TEST(Unpack, IdentityFactorGivesIdentityMetric) {
  std::vector<double> p(packed_size(3), 0.0);
  // B segment starts after the 3 skew entries; lower-triangle rows (0,0), (1,0),(1,1), (2,0),(2,1),(2,2).
  p[3 + 0] = 1.0;
  p[3 + 2] = 1.0;
  p[3 + 5] = 1.0;
  const auto ops = unpack_operators(p, 3);
  EXPECT_TRUE(ops.M.isApprox(Eigen::Matrix3d::Identity()));
  EXPECT_EQ((ops.M - Eigen::Matrix3d::Identity()).norm(), 0.0);
}

TEST(Unpack, WrongLengthNamesBothLengths) {
  try {
    unpack_operators(std::vector<double>(10, 0.0), 13);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("195"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("10"), std::string::npos);
  }
}

TEST(Unpack, RandomOutputsAreSkewAndPsd) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ops = unpack_operators(random_packed(13, rng), 13);
    EXPECT_EQ((ops.L + ops.L.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((ops.M - ops.M.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ops.M, Eigen::EigenvaluesOnly);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(Unpack, QuadraticFormOfSkewVanishes) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ops = unpack_operators(random_packed(13, rng), 13);
    Eigen::VectorXd v(13);
    for (auto& x : v) x = rng.normal();
    EXPECT_NEAR(v.dot(ops.L * v), 0.0, 1e-12 * ops.L.norm() * v.squaredNorm());
  }
}

TEST(Unpack, PackRoundTripIsBitIdentical) {
  Rng rng(13);
  for (std::size_t d : {1u, 2u, 5u, 13u}) {
    const auto p = random_packed(d, rng);
    const auto q = pack(unpack_factors(p, d));
    ASSERT_EQ(p.size(), q.size());
    EXPECT_EQ(std::memcmp(p.data(), q.data(), p.size() * sizeof(double)), 0);
  }
}

TEST(Euler, ZeroOperatorsKeepState) {
  Eigen::VectorXd x(3);
  x << 1, -2, 3;
  const auto ops = unpack_operators(std::vector<double>(packed_size(3), 0.0), 3);
  EXPECT_EQ(euler_step(x, ops, 0.005), x);
}

TEST(Euler, RotationExample) {
  const auto ops = ops2(rot(), Eigen::Matrix2d::Zero(), {1, 0}, {0, 0});
  const Eigen::VectorXd y = euler_step(Eigen::Vector2d(0, 0), ops, 0.005);
  EXPECT_DOUBLE_EQ(y(0), 0.0);
  EXPECT_DOUBLE_EQ(y(1), -0.005);
}

TEST(Euler, RejectsNonFiniteAndBadStep) {
  const auto ops = ops2(rot(), Eigen::Matrix2d::Zero(), {1e308, 0}, {0, 0});
  EXPECT_THROW(euler_step(Eigen::Vector2d(0, 0), ops, 1e10), DivergenceError);
  EXPECT_THROW(euler_step(Eigen::Vector2d(0, 0), ops, -1.0), std::invalid_argument);
  EXPECT_THROW(euler_step(Eigen::Vector3d(0, 0, 0), ops, 0.1), std::invalid_argument);
}

TEST(Euler, OscillatorExactOperatorsConvergeAtFirstOrder) {
  const OscillatorSystem sys{1.0, 4.0, 0.3, 1.0, 1.0};
  const OscillatorState s0{0.5, 0.2, 1.0};
  const double horizon = 0.5;
  auto euler_error = [&](int steps) {
    const double dt = horizon / steps;
    Eigen::VectorXd x = s0.vec();
    for (int i = 0; i < steps; ++i) x = euler_step(x, sys.operators(OscillatorState::from(x)), dt);
    const auto ref = sys.step_exact(s0, horizon, 2000);
    return (x - ref.vec()).norm();
  };
  const double e1 = euler_error(100), e2 = euler_error(200);
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
}

TEST(Degeneracy, Examples) {
  auto r = degeneracy_residual(ops2(Eigen::Matrix2d::Random(), Eigen::Matrix2d::Identity(), {0, 0}, {0, 0}));
  EXPECT_EQ(r.r_L, 0.0);
  EXPECT_EQ(r.r_M, 0.0);

  // M annihilates DE = (1, 0).
  const Eigen::Matrix2d M = (Eigen::Matrix2d() << 0, 0, 0, 2).finished();
  r = degeneracy_residual(ops2(rot(), M, {1, 0}, {0, 0}));
  EXPECT_EQ(r.r_L, 0.0);
  EXPECT_EQ(r.r_M, 0.0);

  r = degeneracy_residual(ops2(rot(), Eigen::Matrix2d::Zero(), {0, 0}, {1, 0}));
  EXPECT_DOUBLE_EQ(r.r_L, 1.0);
}

TEST(ThermoRates, ExactDegeneracyGivesZeroEnergyRate) {
  const Eigen::Matrix2d M = (Eigen::Matrix2d() << 0, 0, 0, 2).finished();
  const auto t = thermo_rates(ops2(Eigen::Matrix2d::Zero(), M, {1, 0}, {0, 3}));
  EXPECT_EQ(t.energy_rate, 0.0);
  EXPECT_DOUBLE_EQ(t.entropy_rate, 18.0);
}

TEST(ThermoRates, ReversibleOnlyWhenMetricVanishes) {
  const auto o = ops2(rot(), Eigen::Matrix2d::Zero(), {0.3, -0.7}, {1.5, 2.0});
  EXPECT_DOUBLE_EQ(thermo_rates(o).entropy_rate, o.DS.dot(o.L * o.DE));
}

TEST(ThermoRates, OscillatorOperators) {
  const OscillatorSystem sys{2.0, 3.0, 0.4, 1.5, 1.0};
  const OscillatorState s{0.3, -0.8, 1.7};
  const auto ops = sys.operators(s);
  const auto r = degeneracy_residual(ops);
  EXPECT_LE(r.r_L, 1e-30);
  EXPECT_LE(r.r_M, 1e-30);
  const auto t = thermo_rates(ops);
  EXPECT_NEAR(t.energy_rate, 0.0, 1e-15);
  EXPECT_NEAR(t.entropy_rate, sys.d * s.p * s.p / (sys.m * sys.m * s.T * s.T), 1e-15);
}

TEST(ThermoRates, BoundsUnderSmallResiduals) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ops = unpack_operators(random_packed(6, rng), 6);
    const auto r = degeneracy_residual(ops);
    const auto t = thermo_rates(ops);
    const double dsmds = ops.DS.dot(ops.M * ops.DS);
    EXPECT_LE(std::fabs(t.energy_rate), ops.DS.norm() * std::sqrt(r.r_M) * (1 + 1e-12) + 1e-12);
    EXPECT_GE(t.entropy_rate, dsmds - std::sqrt(r.r_L) * ops.DE.norm() * (1 + 1e-12) - 1e-12);
  }
}

TEST(TapeOps, EulerUpdateMatchesPlainStep) {
  Rng rng(21);
  const std::size_t d = 4;
  Tensor x = gsnn::testing::random_tensor({3, d}, rng);
  Tensor p = gsnn::testing::random_tensor({3, packed_size(d)}, rng);
  Tape t(false);
  const Tensor y = euler_update(t.constant(x), t.constant(p), 0.01).value();
  for (std::size_t r = 0; r < 3; ++r) {
    const auto ops = unpack_operators(std::span<const double>(p.data() + r * p.cols(), p.cols()), d);
    const Eigen::VectorXd ref = euler_step(Eigen::Map<const Eigen::VectorXd>(x.data() + r * d, d), ops, 0.01);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(y.at(r, i), ref(i), 1e-15);
  }
}

TEST(TapeOps, EulerUpdateGradient) {
  Rng rng(22);
  const std::size_t d = 4;
  Tensor w = gsnn::testing::random_tensor({2, d}, rng);
  auto f = [&](Tape& t, const std::vector<Var>& v) { return sum(mul(euler_update(v[0], v[1], 0.3), t.constant(w))); };
  const auto res = gsnn::testing::gradcheck(f, {gsnn::testing::random_tensor({2, d}, rng), gsnn::testing::random_tensor({2, packed_size(d)}, rng)});
  EXPECT_LE(res.max_rel_error, 1e-5);
  EXPECT_GT(res.max_abs_grad, 0.0);
}

TEST(TapeOps, DegeneracyTermsValueAndGradient) {
  Rng rng(23);
  const std::size_t d = 5;
  Tensor p = gsnn::testing::random_tensor({3, packed_size(d)}, rng);
  Tape t(false);
  const Tensor y = degeneracy_terms(t.constant(p), d).value();
  for (std::size_t r = 0; r < 3; ++r) {
    const auto res = degeneracy_residual(unpack_operators(std::span<const double>(p.data() + r * p.cols(), p.cols()), d));
    EXPECT_NEAR(y.at(r, 0), res.r_L, 1e-13);
    EXPECT_NEAR(y.at(r, 1), res.r_M, 1e-13);
  }
  Tensor w = gsnn::testing::random_tensor({3, 2}, rng);
  auto f = [&](Tape& tp, const std::vector<Var>& v) { return sum(mul(degeneracy_terms(v[0], d), tp.constant(w))); };
  const auto g = gsnn::testing::gradcheck(f, {p});
  EXPECT_LE(g.max_rel_error, 1e-5);
}
