#pragma once

#include "gsnn/params.hpp"

#include <cmath>
#include <map>
#include <string>

namespace gsnn {

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam with decoupled weight decay (θ -= lr·wd·θ).
///
/// Only unfrozen entries that appear in the gradient map are touched; frozen
/// entries stay bit-identical even if a gradient is supplied for them.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

  void step(ParameterSet& ps, const Gradients& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& e : ps.entries()) {
      if (e.frozen) continue;
      auto git = grads.find(e.name);
      if (git == grads.end()) continue;
      const Tensor& g = git->second;
      if (g.shape() != e.value.shape())
        throw std::invalid_argument("adam: gradient " + g.shape_string() + " does not match parameter '" + e.name +
                                    "' " + e.value.shape_string());
      auto [it, fresh] = moments_.try_emplace(e.name);
      Moments& m = it->second;
      if (fresh) {
        m.first = Tensor::zeros_like(e.value);
        m.second = Tensor::zeros_like(e.value);
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        m.first[i] = cfg_.beta1 * m.first[i] + (1.0 - cfg_.beta1) * g[i];
        m.second[i] = cfg_.beta2 * m.second[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mh = m.first[i] / bc1;
        const double vh = m.second[i] / bc2;
        double& th = e.value[i];
        th -= cfg_.lr * cfg_.weight_decay * th;
        th -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> moments_;
};

/// Single-call form used by tests: one step with a fresh optimizer.
inline ParameterSet adam_step(ParameterSet params, const Gradients& grads, double lr, double weight_decay) {
  Adam opt({lr, weight_decay});
  opt.step(params, grads);
  return params;
}

}  // namespace gsnn
