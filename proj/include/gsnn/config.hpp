#pragma once

// Training and correction settings. Defaults are the full-scale source model
// and update settings; `desk_profile()` shrinks them for a single core.

#include "gsnn/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace gsnn {

struct AeConfig {
  std::string group;
  std::vector<std::size_t> hidden;  ///< encoder widths, mirrored by the decoder
  std::size_t bottleneck = 20;
  double lambda_reg = 0.001;
  TrainConfig train{1e-4, 1e-5, 10000, 64};
};

struct ReductionConfig {
  std::vector<AeConfig> groups;
  std::size_t latent_dim = 13;        ///< total retained latent units
  std::size_t finetune_epochs = 0;    ///< masked retraining after selection
};

struct GruConfig {
  std::size_t layers = 3;
  std::size_t hidden = 26;
  std::size_t window = 16;
  TrainConfig train{1e-3, 1e-5, 10000, 64};
};

struct SpnnConfig {
  std::size_t layers = 13;
  std::size_t width = 195;
  double lambda_mse = 1000.0;
  TrainConfig train{1e-3, 1e-5, 5000, 64};
};

struct CorrectionConfig {
  double lr = 5e-5;
  double weight_decay = 1e-5;
  std::size_t epochs = 2000;
  double lambda = 2000.0;
  std::size_t gru_unfrozen = 1;   ///< GRU layers counted from the output end
  std::size_t spnn_unfrozen = 4;  ///< SPNN layers counted from the output end
  double train_fraction = 0.8;
  std::size_t patience = 200;     ///< epochs without validation improvement before stopping; 0 disables
  std::size_t batch = 0;          ///< 0 = full batch
};

struct PipelineConfig {
  ReductionConfig reduction;
  GruConfig gru;
  SpnnConfig spnn;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

inline ReductionConfig full_scale_reduction() {
  ReductionConfig r;
  r.groups = {
      {"q", {120, 120}, 20, 0.001, {1e-4, 1e-6, 10000, 64}},
      {"v", {200, 200, 200, 200}, 20, 0.001, {1e-4, 1e-5, 10000, 64}},
      {"e", {40, 40, 40}, 10, 0.001, {1e-4, 1e-5, 10000, 64}},
      {"sigma", {200, 200, 200}, 20, 0.001, {1e-4, 1e-5, 10000, 64}},
      {"tau", {200, 200, 200}, 20, 0.001, {1e-3, 1e-6, 10000, 64}},
  };
  return r;
}

/// Full-scale source-model settings (6402-wide autoencoder groups).
inline PipelineConfig full_scale_profile() {
  PipelineConfig p;
  p.reduction = full_scale_reduction();
  return p;
}

/// Update settings for simulated observations.
inline CorrectionConfig computational_correction() { return {}; }

/// Real-recording update row: higher learning rate, one more SPNN layer, longer run.
inline CorrectionConfig real_correction() {
  CorrectionConfig c;
  c.lr = 1e-4;
  c.spnn_unfrozen = 5;
  c.epochs = 4000;
  return c;
}

inline CorrectionConfig correction_profile(const std::string& name) {
  if (name == "computational") return computational_correction();
  if (name == "real") return real_correction();
  throw std::invalid_argument("unknown correction profile '" + name + "' (known: computational, real)");
}

/// Same architecture family at a size one CPU core trains in minutes. The
/// L1 penalty barely separates units at this size, so each group gets a
/// bottleneck close to the number of modes it needs (v and tau carry the
/// travelling-wave content) and selection trims the 16 units to 13.
inline PipelineConfig desk_profile() {
  PipelineConfig p;
  const std::pair<const char*, std::size_t> widths[] = {{"q", 2}, {"v", 5}, {"e", 2}, {"sigma", 2}, {"tau", 5}};
  for (const auto& [g, b] : widths) p.reduction.groups.push_back({g, {64}, b, 0.001, {2e-3, 1e-6, 400, 64, 0.05}});
  p.reduction.finetune_epochs = 133;
  p.gru.train = {3e-3, 1e-6, 400, 128, 0.05};
  p.spnn.width = 64;
  p.spnn.train = {1e-3, 1e-6, 400, 64, 0.05};
  return p;
}

// ------------------------------------------------------------------ JSON

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr}, {"wd", c.weight_decay}, {"epochs", c.epochs}, {"batch", c.batch},
       {"final_lr_fraction", c.final_lr_fraction}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("wd", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.final_lr_fraction = j.value("final_lr_fraction", c.final_lr_fraction);
}

inline void to_json(nlohmann::json& j, const AeConfig& c) {
  j = {{"group", c.group}, {"hidden", c.hidden}, {"output_size", c.bottleneck}, {"lambda_reg", c.lambda_reg},
       {"train", c.train}};
}
inline void from_json(const nlohmann::json& j, AeConfig& c) {
  c.group = j.value("group", c.group);
  c.hidden = j.value("hidden", c.hidden);
  c.bottleneck = j.value("output_size", c.bottleneck);
  c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
  if (j.contains("train")) from_json(j["train"], c.train);
}

inline void to_json(nlohmann::json& j, const ReductionConfig& c) {
  j = {{"groups", c.groups}, {"latent_dim", c.latent_dim}, {"finetune_epochs", c.finetune_epochs}};
}
inline void from_json(const nlohmann::json& j, ReductionConfig& c) {
  if (j.contains("groups")) {
    // Entries merge into the existing group of the same name, so a file can override one field.
    for (const auto& g : j["groups"]) {
      const std::string name = g.value("group", std::string());
      auto it = std::find_if(c.groups.begin(), c.groups.end(), [&](const AeConfig& a) { return a.group == name; });
      if (it == c.groups.end()) {
        c.groups.push_back(g.get<AeConfig>());
      } else {
        from_json(g, *it);
      }
    }
  }
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
}

inline void to_json(nlohmann::json& j, const GruConfig& c) {
  j = {{"layers", c.layers}, {"hidden", c.hidden}, {"window", c.window}, {"train", c.train}};
}
inline void from_json(const nlohmann::json& j, GruConfig& c) {
  c.layers = j.value("layers", c.layers);
  c.hidden = j.value("hidden", c.hidden);
  c.window = j.value("window", c.window);
  if (j.contains("train")) from_json(j["train"], c.train);
}

inline void to_json(nlohmann::json& j, const SpnnConfig& c) {
  j = {{"layers", c.layers}, {"width", c.width}, {"lambda", c.lambda_mse}, {"train", c.train}};
}
inline void from_json(const nlohmann::json& j, SpnnConfig& c) {
  c.layers = j.value("layers", c.layers);
  c.width = j.value("width", c.width);
  c.lambda_mse = j.value("lambda", c.lambda_mse);
  if (j.contains("train")) from_json(j["train"], c.train);
}

inline void to_json(nlohmann::json& j, const CorrectionConfig& c) {
  j = {{"lr", c.lr},
       {"wd", c.weight_decay},
       {"epochs", c.epochs},
       {"lambda", c.lambda},
       {"gru_unfrozen", c.gru_unfrozen},
       {"spnn_unfrozen", c.spnn_unfrozen},
       {"train_fraction", c.train_fraction},
       {"patience", c.patience},
       {"batch", c.batch}};
}
inline void from_json(const nlohmann::json& j, CorrectionConfig& c) {
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("wd", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.lambda = j.value("lambda", c.lambda);
  c.gru_unfrozen = j.value("gru_unfrozen", c.gru_unfrozen);
  c.spnn_unfrozen = j.value("spnn_unfrozen", c.spnn_unfrozen);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.patience = j.value("patience", c.patience);
  c.batch = j.value("batch", c.batch);
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"autoencoders", c.reduction}, {"gru", c.gru}, {"spnn", c.spnn}, {"train_fraction", c.train_fraction},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  if (j.contains("autoencoders")) from_json(j["autoencoders"], c.reduction);
  if (j.contains("gru")) from_json(j["gru"], c.gru);
  if (j.contains("spnn")) from_json(j["spnn"], c.spnn);
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.seed = j.value("seed", c.seed);
}

}  // namespace gsnn
