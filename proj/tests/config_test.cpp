#include "gsnn/config.hpp"
#include "gsnn/dataset.hpp"

#include <gtest/gtest.h>

using namespace gsnn;

TEST(Config, FullScaleDefaults) {
  const PipelineConfig p = full_scale_profile();
  ASSERT_EQ(p.reduction.groups.size(), 5u);
  EXPECT_EQ(p.reduction.groups[0].hidden, (std::vector<std::size_t>{120, 120}));
  EXPECT_EQ(p.reduction.groups[1].hidden.size(), 4u);
  EXPECT_EQ(p.reduction.groups[2].bottleneck, 10u);
  EXPECT_EQ(p.reduction.groups[4].train.lr, 1e-3);
  EXPECT_EQ(p.reduction.latent_dim, 13u);
  EXPECT_EQ(p.gru.layers, 3u);
  EXPECT_EQ(p.gru.hidden, 26u);
  EXPECT_EQ(p.gru.window, 16u);
  EXPECT_EQ(p.spnn.layers, 13u);
  EXPECT_EQ(p.spnn.width, 195u);
  EXPECT_EQ(p.spnn.lambda_mse, 1000.0);
  EXPECT_EQ(p.spnn.train.epochs, 5000u);
  EXPECT_EQ(p.train_fraction, 0.8);
}

TEST(Config, CorrectionProfileDefaults) {
  const CorrectionConfig c = correction_profile("computational");
  EXPECT_EQ(c.lr, 5e-5);
  EXPECT_EQ(c.weight_decay, 1e-5);
  EXPECT_EQ(c.epochs, 2000u);
  EXPECT_EQ(c.lambda, 2000.0);
  EXPECT_EQ(c.gru_unfrozen, 1u);
  EXPECT_EQ(c.spnn_unfrozen, 4u);
  const CorrectionConfig r = correction_profile("real");
  EXPECT_EQ(r.lr, 1e-4);
  EXPECT_EQ(r.spnn_unfrozen, 5u);
  EXPECT_EQ(r.epochs, 4000u);
  EXPECT_THROW(correction_profile("fast"), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndPartialOverride) {
  const PipelineConfig p = desk_profile();
  const nlohmann::json j = p;
  const PipelineConfig back = j.get<PipelineConfig>();
  EXPECT_EQ(nlohmann::json(back), j);

  // A file naming one group and one field changes only that field.
  PipelineConfig q = full_scale_profile();
  from_json(nlohmann::json::parse(R"({"autoencoders": {"groups": [{"group": "v", "output_size": 7}]},
                                      "spnn": {"train": {"epochs": 12}}})"),
            q);
  EXPECT_EQ(q.reduction.groups[1].bottleneck, 7u);
  EXPECT_EQ(q.reduction.groups[1].hidden.size(), 4u);
  EXPECT_EQ(q.reduction.groups[0].bottleneck, 20u);
  EXPECT_EQ(q.spnn.train.epochs, 12u);
  EXPECT_EQ(q.spnn.train.lr, 1e-3);
}

TEST(Config, ShippedDeskFileMatchesDeskProfile) {
  const auto j = read_json(GSNN_SOURCE_DIR "/configs/desk.json");
  PipelineConfig from_file = full_scale_profile();
  from_json(j, from_file);
  nlohmann::json want = desk_profile(), have = from_file;
  want.erase("seed");
  have.erase("seed");
  EXPECT_EQ(have, want);
  CorrectionConfig c = computational_correction();
  from_json(j.at("correction"), c);
  EXPECT_EQ(nlohmann::json(c), nlohmann::json(computational_correction()));
}
