#include "gsnn/reduction.hpp"

#include "support/gradcheck.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace gsnn;
using gsnn::testing::gradcheck;
using gsnn::testing::random_tensor;

namespace {

void zero_weights(ParameterSet& ps) {
  for (auto& e : ps.entries())
    if (!e.frozen) e.value.fill(0.0);
}

AeConfig small_ae(std::size_t bottleneck = 3) {
  return {"q", {6}, bottleneck, 0.001, {1e-2, 0.0, 10, 0}};
}

}  // namespace

TEST(AeLoss, HandExamples) {
  Tape t(false);
  Var s = t.constant(Tensor::matrix(1, 2, {1.0, 0.0}));
  Var sh = t.constant(Tensor::matrix(1, 2, {0.0, 0.0}));
  Var x = t.constant(Tensor::matrix(1, 1, {2.0}));
  EXPECT_NEAR(ae_loss(s, sh, x, 0.001).value().item(), 0.502, 1e-15);
  EXPECT_DOUBLE_EQ(ae_loss(s, sh, x, 0.0).value().item(), 0.5);
  Var zero = t.constant(Tensor::matrix(1, 1, {0.0}));
  EXPECT_DOUBLE_EQ(ae_loss(s, s, zero, 0.003).value().item(), 0.0);
}

TEST(AeLoss, PenaltyAveragesOverSamples) {
  Tape t(false);
  Var s = t.constant(Tensor::matrix(2, 1, {0.0, 0.0}));
  Var x = t.constant(Tensor::matrix(2, 2, {1.0, -1.0, 2.0, 0.0}));
  EXPECT_NEAR(ae_loss(s, s, x, 0.5).value().item(), 0.5 * 4.0 / 2.0, 1e-15);
}

TEST(AeLoss, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  auto r = gradcheck([](Tape&, const std::vector<Var>& v) { return ae_loss(v[0], v[1], v[2], 0.004); },
                     {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3, 2}, rng, 0.1, 1.0)});
  EXPECT_LE(r.max_rel_error, 1e-5);
}

TEST(Autoencoder, MirroredLayout) {
  GroupAutoencoder ae({"v", {8, 5}, 3, 0.001, {}}, 10);
  ASSERT_EQ(ae.encoder.layers.size(), 3u);
  ASSERT_EQ(ae.decoder.layers.size(), 3u);
  EXPECT_EQ(ae.encoder.layers[0].in, 10u);
  EXPECT_EQ(ae.encoder.layers[2].out, 3u);
  EXPECT_EQ(ae.encoder.layers[2].act, Activation::linear);
  EXPECT_EQ(ae.decoder.layers[0].in, 3u);
  EXPECT_EQ(ae.decoder.layers[0].out, 5u);
  EXPECT_EQ(ae.decoder.layers[1].out, 8u);
  EXPECT_EQ(ae.decoder.layers[2].out, 10u);
  EXPECT_EQ(ae.decoder.layers[2].act, Activation::linear);
  EXPECT_EQ(ae.decoder.layers[0].act, Activation::relu);
}

TEST(Autoencoder, ZeroWeightsGiveBiasImages) {
  Rng rng(1);
  ParameterSet ps;
  GroupAutoencoder ae(small_ae(), 4);
  ae.init(ps, rng, Tensor::matrix(2, 4, {1, 2, 3, 4, 3, 2, 1, 0}));
  zero_weights(ps);
  ps.at(ae.encoder.layers.back().bias_name()) = Tensor::vector({0.5, -1.0, 2.0});
  ps.at(ae.decoder.layers.back().bias_name()) = Tensor::vector({1.0, 0.0, -1.0, 0.25});
  Tape t(false);
  Var raw = t.constant(Tensor::matrix(3, 4, {9, 9, 9, 9, -1, 0, 1, 2, 5, 5, 5, 5}));
  const Tensor x = ae.encode(t, ps, raw).value();
  const Tensor s = ae.decode(t, ps, t.constant(x)).value();
  const double sd = ps.at(ae.scale_name())[0];
  const Tensor& mu = ps.at(ae.shift_name());
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(x.at(r, 0), 0.5);
    EXPECT_EQ(x.at(r, 1), -1.0);
    EXPECT_EQ(x.at(r, 2), 2.0);
    const double bias[] = {1.0, 0.0, -1.0, 0.25};
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(s.at(r, c), mu[c] + sd * bias[c]);
  }
}

TEST(Autoencoder, ZeroLatentZeroBiasDecoderGivesShift) {
  Rng rng(2);
  ParameterSet ps;
  GroupAutoencoder ae(small_ae(), 3);
  ae.init(ps, rng, Tensor::matrix(2, 3, {0, 0, 0, 0, 0, 0}));
  zero_weights(ps);
  Tape t(false);
  const Tensor s = ae.decode(t, ps, t.constant(Tensor::matrix(1, 3))).value();
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s[c], 0.0);
}

TEST(Autoencoder, ShapeMismatchRejected) {
  Rng rng(2);
  ParameterSet ps;
  GroupAutoencoder ae(small_ae(), 3);
  ae.init(ps, rng, Tensor::matrix(1, 3));
  Tape t(false);
  EXPECT_THROW(ae.encode(t, ps, t.constant(Tensor::matrix(1, 4))), std::invalid_argument);
  EXPECT_THROW(ae.decode(t, ps, t.constant(Tensor::matrix(1, 2))), std::invalid_argument);
}

TEST(Autoencoder, OverfitsThreeSamples) {
  // Identity-width bottleneck: three samples must be reproduced almost exactly.
  Rng rng(11);
  Tensor data = Tensor::matrix(3, 3, {1.0, 0.2, -0.5, 0.3, 0.9, 0.1, -0.4, -0.6, 0.8});
  AeConfig cfg{"e", {16}, 3, 0.0, {1e-2, 0.0, 3000, 0}};
  GroupAutoencoder ae(cfg, 3);
  ParameterSet ps;
  ae.init(ps, rng, data);
  const auto hist = train_autoencoder(ps, ae, data, cfg.train, rng);
  EXPECT_LT(hist.back(), hist.front() / 10.0);
  Tape t(false);
  const Tensor rec = ae.decode(t, ps, ae.encode(t, ps, t.constant(data))).value();
  for (std::size_t i = 0; i < data.size(); ++i) EXPECT_NEAR(rec[i], data[i], 1e-3);
}

TEST(Autoencoder, MaskedUnitsDoNotReachDecoder) {
  Rng rng(4);
  ParameterSet ps;
  GroupAutoencoder ae(small_ae(4), 3);
  ae.init(ps, rng, Tensor::matrix(1, 3));
  ae.set_active(ps, {1, 3});
  EXPECT_EQ(ae.active(ps), (std::vector<std::size_t>{1, 3}));
  Tape t(false);
  Var raw = t.constant(Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.3, 0.0, 1.0}));
  const Tensor all = ae.encode_all(t, ps, raw).value();
  const Tensor kept = ae.encode(t, ps, raw).value();
  ASSERT_EQ(kept.cols(), 2u);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(kept.at(r, 0), all.at(r, 1));
    EXPECT_EQ(kept.at(r, 1), all.at(r, 3));
  }
  EXPECT_THROW(ae.set_active(ps, {4}), std::invalid_argument);
}

TEST(Selection, HandExample) {
  const auto sel = select_active_latents({{10.0, 9.0, 0.01, 0.02}}, 0.1);
  EXPECT_EQ(sel[0], (std::vector<std::size_t>{0, 1}));
}

TEST(Selection, DeadUnitExcluded) {
  const auto sel = select_active_latents({{0.0, 1.0, 0.5}}, 1e-6);
  EXPECT_EQ(sel[0], (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(select_active_latents({{1.0}}, 0.0), std::invalid_argument);
}

TEST(Selection, BisectionHitsRequestedTotal) {
  Rng rng(9);
  std::vector<std::vector<double>> act(5);
  for (auto& a : act)
    for (int i = 0; i < 6; ++i) a.push_back(rng.uniform(0.0, 1.0));
  for (std::size_t total : {5u, 9u, 13u, 20u}) {
    const auto sel = select_latent_total(act, total);
    EXPECT_EQ(total_selected(sel.active), total);
    // The same threshold applied directly agrees with the sweep.
    EXPECT_EQ(select_active_latents(act, sel.threshold), sel.active);
  }
}

TEST(Selection, UnreachableTotalReported) {
  try {
    select_latent_total({{1.0, 0.0}, {2.0}}, 3);
    FAIL() << "expected LatentSelectionError";
  } catch (const LatentSelectionError& e) {
    EXPECT_EQ(e.available, 2u);
  }
}

TEST(Reduction, SliceMapPartitionsLatent) {
  Rng rng(5);
  ReductionConfig cfg;
  for (const char* g : {"q", "v", "e"}) cfg.groups.push_back({g, {5}, 3, 0.001, {}});
  ReductionModel model(cfg, {4, 4, 2});
  ParameterSet ps;
  for (auto& ae : model.aes) ae.init(ps, rng, Tensor::matrix(1, ae.input_dim));
  model.aes[0].set_active(ps, {0, 2});
  model.aes[1].set_active(ps, {1});
  const SliceMap m = model.slices(ps);
  EXPECT_EQ(m.dim(), 6u);
  EXPECT_EQ(m.offset, (std::vector<std::size_t>{0, 2, 3}));
  EXPECT_EQ(m.count, (std::vector<std::size_t>{2, 1, 3}));
  EXPECT_EQ(m.index_of("e"), 2u);
  EXPECT_THROW(m.index_of("tau"), std::out_of_range);

  FullState s{random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), random_tensor({2, 2}, rng)};
  const Tensor x = model.encode(ps, s);
  EXPECT_EQ(x.cols(), 6u);
  const FullState a = model.decode(ps, x), b = model.decode(ps, x);
  for (std::size_t g = 0; g < 3; ++g) {
    ASSERT_EQ(a[g].size(), b[g].size());
    EXPECT_EQ(std::memcmp(a[g].data(), b[g].data(), a[g].size() * sizeof(double)), 0);
  }
  EXPECT_THROW(model.decode(ps, Tensor::matrix(1, 5)), std::invalid_argument);
}

TEST(Reduction, TrainingRetainsConfiguredTotalAndReconstructs) {
  // Group q carries two hidden factors, group v one. With one surplus unit the
  // sweep may drop from either group and still leave enough capacity.
  Rng rng(21);
  const std::size_t n = 64;
  Tensor a = Tensor::matrix(n, 6), b = Tensor::matrix(n, 4);
  for (std::size_t r = 0; r < n; ++r) {
    const double u = rng.uniform(-1, 1), w = rng.uniform(-1, 1);
    for (std::size_t c = 0; c < 6; ++c) a.at(r, c) = u * std::sin(0.5 * c + 1.0) + 0.3 * w * c / 6.0;
    for (std::size_t c = 0; c < 4; ++c) b.at(r, c) = 2.0 + w * std::cos(0.7 * c);
  }
  ReductionConfig cfg;
  cfg.groups = {{"q", {16}, 3, 0.001, {5e-3, 0.0, 800, 16}}, {"v", {16}, 2, 0.001, {5e-3, 0.0, 800, 16}}};
  cfg.latent_dim = 4;
  cfg.finetune_epochs = 200;
  ReductionModel model(cfg, {6, 4});
  ParameterSet ps;
  const auto h = train_reduction(ps, model, cfg, {a, b}, rng);
  EXPECT_EQ(model.slices(ps).dim(), 4u);
  for (const auto& g : h.train) EXPECT_LT(g.back(), g.front() / 10.0);
  const FullState rec = model.decode(ps, model.encode(ps, {a, b}));
  EXPECT_LT(relative_l2(a, rec[0]), 0.05);
  EXPECT_LT(relative_l2(b, rec[1]), 0.05);
}

TEST(RelativeL2, Examples) {
  EXPECT_DOUBLE_EQ(relative_l2(Tensor::vector({3, 4}), Tensor::vector({3, 4})), 0.0);
  EXPECT_DOUBLE_EQ(relative_l2(Tensor::vector({3, 4}), Tensor::vector({0, 0})), 1.0);
  EXPECT_DOUBLE_EQ(relative_l2(Tensor::vector({0, 0}), Tensor::vector({3, 4})), 5.0);
}
