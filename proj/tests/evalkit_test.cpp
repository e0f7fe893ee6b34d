#include "gsnn/evalkit.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace gsnn;

TEST(RelativeError, IdenticalSeriesIsZero) {
  const Tensor z = Tensor::matrix(2, 3, {0.05, 0.06, 0.04, 0.05, 0.05, 0.05});
  const ErrorReport r = relative_error(z, z, "test", {0, 1}, 0.005);
  EXPECT_EQ(r.max(), 0.0);
  EXPECT_EQ(r.mean(), 0.0);
  EXPECT_EQ(r.literal, 0.0);
}

TEST(RelativeError, UniformUnderestimation) {
  const Tensor z = Tensor::matrix(2, 3, {0.05, 0.06, 0.04, 0.05, 0.05, 0.05});
  Tensor zh = z;
  for (auto& v : zh.values()) v *= 0.9;
  const ErrorReport r = relative_error(z, zh, "test", {3, 4}, 0.005);
  for (double e : r.series) EXPECT_NEAR(e, 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(r.time[1], 4 * 0.005);
}

TEST(RelativeError, ScaleInvariant) {
  const Tensor z = Tensor::matrix(1, 4, {0.05, 0.06, 0.04, 0.055});
  const Tensor zh = Tensor::matrix(1, 4, {0.051, 0.058, 0.041, 0.05});
  Tensor z3 = z, zh3 = zh;
  for (auto& v : z3.values()) v *= 3.0;
  for (auto& v : zh3.values()) v *= 3.0;
  EXPECT_NEAR(relative_error(z, zh, "a", {0}, 1).series[0], relative_error(z3, zh3, "a", {0}, 1).series[0], 1e-15);
}

TEST(RelativeError, RejectsNonPositiveTruthAndMisalignment) {
  EXPECT_THROW(relative_error(Tensor::matrix(1, 2, {0.0, 1.0}), Tensor::matrix(1, 2), "a", {0}, 1),
               std::invalid_argument);
  EXPECT_THROW(relative_error(Tensor::matrix(1, 2, {1, 1}), Tensor::matrix(1, 3), "a", {0}, 1), std::invalid_argument);
  EXPECT_THROW(relative_error(Tensor::matrix(1, 2, {1, 1}), Tensor::matrix(1, 2), "a", {0, 1}, 1),
               std::invalid_argument);
}

TEST(LiteralAggregate, SignedHandExample) {
  // One snapshot, two points: (1 − 0.81)/1 + (4 − 4.84)/4 = 0.19 − 0.21 = −0.02.
  const Tensor z = Tensor::matrix(1, 2, {1.0, 2.0});
  const Tensor zh = Tensor::matrix(1, 2, {0.9, 2.2});
  EXPECT_NEAR(literal_aggregate(z, zh), -std::sqrt(0.02), 1e-15);
  // Two snapshots: the 1/N sits outside the square root.
  const Tensor z2 = Tensor::matrix(2, 1, {1.0, 1.0});
  const Tensor zh2 = Tensor::matrix(2, 1, {0.0, 0.0});
  EXPECT_NEAR(literal_aggregate(z2, zh2), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(ErrorCsv, EmptyReportIsHeaderOnly) {
  EXPECT_EQ(error_csv({}), "snapshot,time_s,rel_err,split\n");
  EXPECT_EQ(error_csv({ErrorReport{}}), "snapshot,time_s,rel_err,split\n");
}

TEST(ErrorCsv, TwoRowFixture) {
  ErrorReport r;
  r.split = "test";
  r.snapshot = {16, 17};
  r.time = {0.08, 0.085};
  r.series = {0.1, 0.25};
  EXPECT_EQ(error_csv({r}),
            "snapshot,time_s,rel_err,split\n"
            "16,0.080000000000000002,0.10000000000000001,test\n"
            "17,0.085000000000000006,0.25,test\n");
}

TEST(ErrorCsv, SeventeenDigitsRoundTrip) {
  ErrorReport r;
  r.split = "train";
  for (int i = 0; i < 50; ++i) {
    r.snapshot.push_back(i);
    r.time.push_back(i * 0.015);
    r.series.push_back(std::exp(-0.37 * i) / 3.0);
  }
  std::istringstream in(error_csv({r}));
  std::string line;
  std::getline(in, line);
  for (int i = 0; i < 50; ++i) {
    ASSERT_TRUE(std::getline(in, line));
    std::istringstream row(line);
    std::string snap, t, e, split;
    std::getline(row, snap, ',');
    std::getline(row, t, ',');
    std::getline(row, e, ',');
    std::getline(row, split, ',');
    EXPECT_EQ(std::stod(t), r.time[i]);
    EXPECT_EQ(std::stod(e), r.series[i]);
    EXPECT_EQ(split, "train");
  }
}

TEST(ErrorSummary, MaxAndMeanPerSplit) {
  ErrorReport a, b;
  a.split = "train";
  a.series = {0.1, 0.3};
  b.split = "test";
  b.series = {0.2};
  const auto j = error_summary({a, b});
  EXPECT_DOUBLE_EQ(j["splits"]["train"]["max"].get<double>(), 0.3);
  EXPECT_DOUBLE_EQ(j["splits"]["train"]["mean"].get<double>(), 0.2);
  EXPECT_EQ(j["splits"]["test"]["count"].get<int>(), 1);
}

TEST(SurfaceHeights, TakesOddColumns) {
  const Tensor s = Tensor::matrix(1, 4, {0.0, 5.0, 1.0, 6.0});
  const Tensor h = surface_heights(s);
  EXPECT_EQ(h.cols(), 2u);
  EXPECT_EQ(h[0], 5.0);
  EXPECT_EQ(h[1], 6.0);
  EXPECT_THROW(surface_heights(Tensor::matrix(1, 3)), std::invalid_argument);
}
