#pragma once

#include "gsnn/adam.hpp"
#include "gsnn/tape.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace gsnn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 100;
  std::size_t batch = 64;           ///< 0 = full batch
  double final_lr_fraction = 1.0;   ///< cosine anneal from lr to lr·fraction over the run
};

using BatchLoss = std::function<Var(Tape&, std::span<const std::size_t> rows)>;
using EpochHook = std::function<void(std::size_t epoch, double loss)>;

/// Rows `index` of a row-major matrix as a new [index.size() x cols] tensor.
inline Tensor take_rows(const Tensor& m, std::span<const std::size_t> index) {
  const std::size_t cols = m.cols();
  Tensor out = Tensor::matrix(index.size(), cols);
  for (std::size_t k = 0; k < index.size(); ++k)
    std::copy_n(m.data() + index[k] * cols, cols, out.data() + k * cols);
  return out;
}

inline double annealed_lr(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.final_lr_fraction == 1.0 || cfg.epochs <= 1) return cfg.lr;
  const double pi = std::acos(-1.0);
  const double s = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  const double f = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(pi * s));
  return cfg.lr * f;
}

/// Shuffled mini-batch Adam over `rows` samples. Returns the mean loss of each epoch.
inline std::vector<double> train_loop(ParameterSet& ps, std::size_t rows, const TrainConfig& cfg, Rng& rng,
                                      const BatchLoss& loss, const EpochHook& hook = {}) {
  Adam opt({cfg.lr, cfg.weight_decay});
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = cfg.batch == 0 ? rows : std::min(cfg.batch, rows);
  std::vector<double> history;
  history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(annealed_lr(cfg, epoch));
    if (batch < rows) rng.shuffle(order);
    double total = 0.0;
    for (std::size_t at = 0; at < rows; at += batch) {
      const std::size_t n = std::min(batch, rows - at);
      Tape t;
      Var l = loss(t, std::span<const std::size_t>(order.data() + at, n));
      total += l.value().item() * static_cast<double>(n);
      t.backward(l);
      opt.step(ps, t.parameter_gradients());
    }
    history.push_back(total / static_cast<double>(rows));
    if (hook) hook(epoch, history.back());
  }
  return history;
}

}  // namespace gsnn
