#pragma once

#include "gsnn/config.hpp"
#include "gsnn/layers.hpp"
#include "gsnn/metriplectic.hpp"
#include "gsnn/training.hpp"

#include <string>
#include <vector>

namespace gsnn {

/// λ·MSE(x_true, x_pred) + mean over rows of (‖L·DS‖² + ‖M·DE‖²).
inline Var spnn_loss(Var x_true, Var x_pred, Var packed, std::size_t d, double lambda_mse) {
  Var deg = mean(row_sum(metriplectic::degeneracy_terms(packed, d)));
  return add(scale(mse(x_true, x_pred), lambda_mse), deg);
}

/// Dense network from a latent state to packed GENERIC operators. The first
/// and last layers are linear, the ones between use ReLU.
struct Spnn {
  std::size_t dim = 13;
  SpnnConfig cfg;
  DenseStack net;

  Spnn() = default;
  Spnn(const SpnnConfig& c, std::size_t d) : dim(d), cfg(c) {
    if (cfg.layers == 0 || cfg.width == 0 || dim == 0) throw std::invalid_argument("SPNN: zero size");
    const std::size_t out = metriplectic::packed_size(dim);
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      const std::size_t in = i == 0 ? dim : cfg.width;
      const std::size_t o = i + 1 == cfg.layers ? out : cfg.width;
      const bool edge = i == 0 || i + 1 == cfg.layers;
      net.layers.push_back({"spnn.l" + std::to_string(i), in, o, edge ? Activation::linear : Activation::relu});
    }
  }

  std::size_t output_size() const { return metriplectic::packed_size(dim); }

  /// `latents` [S x d] provides the frozen input standardisation.
  void init(ParameterSet& ps, Rng& rng, const Tensor& latents) const {
    net.init(ps, rng);
    Tensor mean(Tensor::Shape{dim}), inv(Tensor::Shape{dim});
    inv.fill(1.0);
    if (latents.size() > 0) {
      if (latents.cols() != dim) throw std::invalid_argument("SPNN init: latent statistics have wrong width");
      for (std::size_t r = 0; r < latents.rows(); ++r)
        for (std::size_t c = 0; c < dim; ++c) mean[c] += latents.at(r, c) / static_cast<double>(latents.rows());
      for (std::size_t c = 0; c < dim; ++c) {
        double ss = 0.0;
        for (std::size_t r = 0; r < latents.rows(); ++r) ss += std::pow(latents.at(r, c) - mean[c], 2);
        const double sd = std::sqrt(ss / static_cast<double>(latents.rows()));
        inv[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
      }
    }
    ps.add("spnn.in_shift", std::move(mean), true);
    ps.add("spnn.in_inv_scale", std::move(inv), true);
  }

  /// Packed operators [B x packed_size(d)] for latent states [B x d].
  Var operators(Tape& t, ParameterSet& ps, Var x) const {
    if (x.value().cols() != dim)
      throw std::invalid_argument("SPNN: latent " + x.value().shape_string() + " but network expects d=" +
                                  std::to_string(dim));
    Tensor neg = ps.at("spnn.in_shift");
    for (auto& v : neg.values()) v = -v;
    Var z = mul_row(add_bias(x, t.constant(std::move(neg))), t.constant(ps.at("spnn.in_inv_scale")));
    return net(t, ps, z);
  }

  /// One forward-Euler step x + Δt(L·DE + M·DS); also returns the packed operators.
  std::pair<Var, Var> step(Tape& t, ParameterSet& ps, Var x, double dt) const {
    Var p = operators(t, ps, x);
    return {metriplectic::euler_update(x, p, dt), p};
  }

  Tensor operators(ParameterSet& ps, const Tensor& x) const {
    Tape t(false);
    return operators(t, ps, t.constant(x)).value();
  }

  void set_trainable_tail(ParameterSet& ps, std::size_t count) const {
    if (count > net.layers.size())
      throw std::invalid_argument("SPNN: cannot unfreeze " + std::to_string(count) + " of " +
                                  std::to_string(net.layers.size()) + " layers");
    net.unfreeze_last(ps, count);
  }
};

/// Trains on consecutive latent pairs: rows of `x0` advance to rows of `x1` over `dt`.
inline std::vector<double> train_spnn(ParameterSet& ps, const Spnn& net, const Tensor& x0, const Tensor& x1, double dt,
                                      const TrainConfig& tc, Rng& rng, const EpochHook& hook = {}) {
  return train_loop(ps, x0.rows(), tc, rng, [&](Tape& t, std::span<const std::size_t> rows) {
    Var a = t.constant(take_rows(x0, rows));
    auto [pred, packed] = net.step(t, ps, a, dt);
    return spnn_loss(t.constant(take_rows(x1, rows)), pred, packed, net.dim, net.cfg.lambda_mse);
  }, hook);
}

}  // namespace gsnn
