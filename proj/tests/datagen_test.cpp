#include "gsnn/dataset.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <numeric>

using namespace gsnn;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_payload(const SloshDataset& a, const SloshDataset& b) {
  if (std::memcmp(&a.dt, &b.dt, sizeof a.dt) != 0 || a.groups.size() != b.groups.size()) return false;
  for (std::size_t i = 0; i < a.groups.size(); ++i)
    if (a.groups[i].name != b.groups[i].name || a.groups[i].dim != b.groups[i].dim ||
        !same_bits(a.groups[i].data, b.groups[i].data))
      return false;
  return true;
}

SloshConfig small_config() {
  SloshConfig c;
  c.columns = 60;
  c.duration = 0.5;
  return c;
}

// Peak-to-trough surface range over the second half of the run.
double late_amplitude(const SloshDataset& ds) {
  const auto& q = ds.group("q");
  double amp = 0.0;
  for (std::size_t s = ds.snapshots() / 2; s < ds.snapshots(); ++s) {
    const auto [lo, hi] = std::minmax_element(q.row(s), q.row(s) + q.dim);
    amp = std::max(amp, *hi - *lo);
  }
  return amp;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("gsnn_" + name)).string();
}

}  // namespace

TEST(Rheology, HerschelBulkleyExamples) {
  const Rheology blood{0.017, 0.708, 0.0};
  EXPECT_DOUBLE_EQ(herschel_bulkley(1.0, blood), 0.017);
  EXPECT_DOUBLE_EQ(herschel_bulkley(0.0, Rheology{2.0, 0.5, 3.0}), 3.0);
  const Rheology newtonian{0.3, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(herschel_bulkley(2.0, newtonian), 0.6);
  EXPECT_DOUBLE_EQ(herschel_bulkley(4.0, newtonian), 2.0 * herschel_bulkley(2.0, newtonian));
  EXPECT_THROW(herschel_bulkley(-1.0, blood), std::invalid_argument);
}

TEST(Rheology, GlycerinePresetAndEffectiveViscosity) {
  const auto g = fluid_preset("glycerine");
  EXPECT_EQ(g.rheology.k, 0.950);
  EXPECT_EQ(g.density, 1261.0);
  EXPECT_DOUBLE_EQ(g.kinematic_viscosity(), 0.950 / 1261.0);
  auto scaled = g;
  scaled.viscosity_scale = 0.3;
  EXPECT_DOUBLE_EQ(scaled.kinematic_viscosity(), 0.3 * 0.950 / 1261.0);
  EXPECT_THROW(fluid_preset("lava"), std::invalid_argument);
}

TEST(Oscillator, ReversibleLimitConservesEnergy) {
  const OscillatorSystem sys{1.0, 2.0, 0.0, 1.0, 1.0};
  OscillatorState s{1.0, 0.0, 1.0};
  const double e0 = sys.energy(s);
  for (int i = 0; i < 200; ++i) {
    const double before = sys.energy(s);
    s = sys.step_exact(s, 0.01);
    EXPECT_LE(std::fabs(sys.energy(s) - before) / std::fabs(before), 1e-10);
  }
  EXPECT_NEAR(sys.energy(s), e0, 1e-10 * e0);
  EXPECT_EQ(sys.operators(s).M.norm(), 0.0);
}

TEST(Oscillator, DissipationConservesEnergyAndProducesEntropy) {
  const OscillatorSystem sys{1.0, 1.0, 0.2, 1.0, 1.0};
  OscillatorState s{0.0, 1.0, 1.0};
  const double e0 = sys.energy(s);
  for (int i = 0; i < 300; ++i) {
    const auto next = sys.step_exact(s, 0.01);
    if (s.p != 0.0) {
      EXPECT_GT(sys.entropy(next), sys.entropy(s));
    }
    s = next;
  }
  EXPECT_LE(std::fabs(sys.energy(s) - e0) / e0, 1e-8);
}

TEST(Oscillator, RestIsFixedPoint) {
  const OscillatorSystem sys;
  const OscillatorState s{0.0, 0.0, 1.3};
  const auto n = sys.step_exact(s, 0.1);
  EXPECT_EQ(n.q, 0.0);
  EXPECT_EQ(n.p, 0.0);
  EXPECT_EQ(n.T, 1.3);
}

TEST(Oscillator, RejectsNonPositiveTemperature) {
  const OscillatorSystem sys;
  EXPECT_THROW(sys.step_exact({0.0, 0.0, 0.0}, 0.1), std::invalid_argument);
  EXPECT_THROW(sys.operators({0.0, 0.0, -1.0}), std::invalid_argument);
}

TEST(Slosh, ZeroImpulseStaysFlat) {
  auto c = small_config();
  c.impulse = 0.0;
  const auto ds = slosh_generate(c);
  for (double h : ds.group("q").data) EXPECT_EQ(h, c.depth);
  for (double u : ds.group("v").data) EXPECT_EQ(u, 0.0);
  for (std::size_t s = 0; s < ds.snapshots(); ++s)
    for (const auto& p : ds.surface(s).points) EXPECT_EQ(p.y, c.depth);
}

TEST(Slosh, GroupsAndCounts) {
  const auto c = small_config();
  const auto ds = slosh_generate(c);
  EXPECT_EQ(ds.snapshots(), 100u);
  ASSERT_EQ(ds.groups.size(), 6u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ds.groups[i].name, state_groups()[i]);
    EXPECT_EQ(ds.groups[i].dim, c.columns);
  }
  EXPECT_EQ(ds.group(kSurfaceGroup).dim, 42u);
  EXPECT_TRUE(ds.surface(7).valid());
}

TEST(Slosh, VolumeIsConserved) {
  auto c = small_config();
  c.impulse = 0.15;
  const auto ds = slosh_generate(c);
  const auto& q = ds.group("q");
  const double v0 = std::accumulate(q.row(0), q.row(0) + q.dim, 0.0);
  for (std::size_t s = 0; s < ds.snapshots(); ++s) {
    const double v = std::accumulate(q.row(s), q.row(s) + q.dim, 0.0);
    EXPECT_LE(std::fabs(v - v0) / v0, 1e-10);
  }
}

TEST(Slosh, DecayIsMonotoneInViscosity) {
  std::vector<double> amps;
  for (double scale : {0.1, 1.0, 10.0}) {
    auto c = small_config();
    c.duration = 1.5;
    c.fluid.viscosity_scale = scale;
    amps.push_back(late_amplitude(slosh_generate(c)));
  }
  EXPECT_GT(amps[0], amps[1]);
  EXPECT_GT(amps[1], amps[2]);
}

TEST(Slosh, SurfaceIsResampledTopField) {
  const auto c = small_config();
  const auto ds = slosh_generate(c);
  const auto& q = ds.group("q");
  for (std::size_t s : {0u, 33u, 99u}) {
    const auto ref = column_surface(std::span<const double>(q.row(s), q.dim), c.tank_length, c.stations);
    EXPECT_TRUE(same_bits(ref.flatten(), ds.surface(s).flatten()));
  }
}

TEST(Slosh, Deterministic) {
  auto c = small_config();
  c.surface_noise = 0.001;
  c.seed = 9;
  EXPECT_TRUE(same_payload(slosh_generate(c), slosh_generate(c)));
  auto other = c;
  other.seed = 10;
  EXPECT_FALSE(same_payload(slosh_generate(c), slosh_generate(other)));
}

TEST(Slosh, FixedInternalStepViolatingCflIsRejected) {
  auto c = small_config();
  c.internal_dt = 0.005;
  try {
    slosh_generate(c);
    FAIL();
  } catch (const CflError& e) {
    EXPECT_GT(e.suggested_dt, 0.0);
    EXPECT_LT(e.suggested_dt, 0.005);
    c.internal_dt = e.suggested_dt;
    EXPECT_NO_THROW(slosh_generate(c));
  }
}

TEST(Slosh, RejectsTooFewSnapshots) {
  auto c = small_config();
  c.duration = 0.05;
  EXPECT_THROW(slosh_generate(c), std::invalid_argument);
  c = small_config();
  c.columns = 10;
  EXPECT_THROW(slosh_generate(c), std::invalid_argument);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  auto c = small_config();
  c.seed = 4;
  c.fluid = fluid_preset("blood");
  const auto ds = slosh_generate(c);
  const auto path = temp_path("roundtrip.gsl");
  write_dataset(path, ds);
  const auto back = read_dataset(path);
  EXPECT_TRUE(same_payload(ds, back));
  EXPECT_EQ(back.fluid.name, "blood");
  EXPECT_EQ(back.fluid.rheology.n, 0.708);
  EXPECT_EQ(back.seed, 4u);
  EXPECT_EQ(encode_dataset(back), encode_dataset(ds));
}

TEST(DatasetFile, HeaderLayout) {
  SloshDataset ds;
  ds.dt = 0.015;
  ds.groups = {{"a", 2, {1.0, 2.0, 3.0, 4.0}}, {"bc", 1, {5.0, 6.0}}};
  const auto bytes = encode_dataset(ds);
  // 8 magic + 4 version + 8 dt + 4 count + (2+1+4) + (2+2+4) + 4 snapshots + 6 doubles
  EXPECT_EQ(bytes.size(), 8u + 4 + 8 + 4 + 7 + 8 + 4 + 48);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "GSLOSH01");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[39], 2);  // snapshot count, first byte
}

TEST(DatasetFile, CorruptionIsRejectedWithOffset) {
  SloshDataset ds;
  ds.groups = {{"a", 2, {1.0, 2.0, 3.0, 4.0}}};
  auto bytes = encode_dataset(ds);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_dataset(bad), io::FormatError);

  bad = bytes;
  bad[8] = 2;
  try {
    decode_dataset(bad);
    FAIL();
  } catch (const io::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 8"), std::string::npos);
  }

  bad = bytes;
  bad.resize(bad.size() - 3);
  EXPECT_THROW(decode_dataset(bad), io::FormatError);

  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_dataset(bad), io::FormatError);
}
