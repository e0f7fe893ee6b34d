#pragma once

#include "gsnn/config.hpp"
#include "gsnn/datagen.hpp"
#include "gsnn/layers.hpp"
#include "gsnn/training.hpp"

#include <string>
#include <vector>

namespace gsnn {

/// Per-column mean and standard deviation; constant columns get unit scale.
inline std::pair<Tensor, Tensor> column_statistics(const Tensor& data) {
  const std::size_t rows = data.rows(), cols = data.cols();
  Tensor mean(Tensor::Shape{cols}), sd(Tensor::Shape{cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mean[c] += data.at(r, c);
  for (std::size_t c = 0; c < cols; ++c) mean[c] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) sd[c] += (data.at(r, c) - mean[c]) * (data.at(r, c) - mean[c]);
  for (std::size_t c = 0; c < cols; ++c) {
    sd[c] = std::sqrt(sd[c] / static_cast<double>(rows));
    if (!(sd[c] > 1e-12 * std::max(1.0, std::fabs(mean[c])))) sd[c] = 1.0;
  }
  return {mean, sd};
}

/// Mean over entries of (x − x̂)².
inline Var gru_loss(Var x_hat, Var x) { return mse(x_hat, x); }

/// Stacked GRU over a window of flattened surface observations followed by a
/// linear head to the latent space. Input and output are standardised with
/// frozen per-column statistics stored beside the weights.
struct SurfaceEncoder {
  std::size_t input = 42;
  std::size_t latent = 13;
  GruConfig cfg;
  std::vector<GruCell> cells;
  DenseLayer head;

  SurfaceEncoder() = default;
  SurfaceEncoder(const GruConfig& c, std::size_t input_dim, std::size_t latent_dim)
      : input(input_dim), latent(latent_dim), cfg(c) {
    if (cfg.layers == 0 || cfg.hidden == 0 || cfg.window == 0) throw std::invalid_argument("GRU encoder: zero size");
    for (std::size_t l = 0; l < cfg.layers; ++l)
      cells.push_back({"gru.l" + std::to_string(l), l == 0 ? input : cfg.hidden, cfg.hidden});
    head = {"gru.head", cfg.hidden, latent, Activation::linear};
  }

  std::size_t window() const { return cfg.window; }

  /// `inputs` [S x input] and `targets` [S x latent] only provide the scaler statistics.
  void init(ParameterSet& ps, Rng& rng, const Tensor& inputs, const Tensor& targets) const {
    for (const auto& c : cells) c.init(ps, rng);
    head.init(ps, rng);
    auto [im, is] = column_statistics(inputs);
    auto [om, os] = column_statistics(targets);
    for (auto& v : is.values()) v = 1.0 / v;
    ps.add("gru.in_shift", std::move(im), true);
    ps.add("gru.in_inv_scale", std::move(is), true);
    ps.add("gru.out_shift", std::move(om), true);
    ps.add("gru.out_scale", std::move(os), true);
  }

  /// `steps` holds the window in time order, each [B x input]; returns [B x latent].
  Var encode(Tape& t, ParameterSet& ps, const std::vector<Var>& steps) const {
    if (steps.size() != cfg.window)
      throw std::invalid_argument("encode_sequence: window of " + std::to_string(steps.size()) + " snapshots, expected " +
                                  std::to_string(cfg.window));
    const std::size_t batch = steps.front().value().rows();
    Tensor neg = ps.at("gru.in_shift");
    for (auto& v : neg.values()) v = -v;
    Var shift = t.constant(std::move(neg));
    Var inv = t.constant(ps.at("gru.in_inv_scale"));
    std::vector<Var> h;
    for (std::size_t l = 0; l < cells.size(); ++l) h.push_back(t.constant(Tensor::matrix(batch, cfg.hidden)));
    for (const Var& z : steps) {
      if (z.value().cols() != input || z.value().rows() != batch)
        throw std::invalid_argument("encode_sequence: observation " + z.value().shape_string() + " but expects [" +
                                    std::to_string(batch) + "x" + std::to_string(input) + "]");
      Var in = mul_row(add_bias(z, shift), inv);
      for (std::size_t l = 0; l < cells.size(); ++l) in = h[l] = cells[l](t, ps, in, h[l]);
    }
    Var y = head(t, ps, h.back());
    return add_bias(mul_row(y, t.constant(ps.at("gru.out_scale"))), t.constant(ps.at("gru.out_shift")));
  }

  Tensor encode(ParameterSet& ps, const std::vector<Tensor>& steps) const {
    Tape t(false);
    std::vector<Var> v;
    for (const auto& s : steps) v.push_back(t.constant(s));
    return encode(t, ps, v).value();
  }

  /// Freezes everything except the last `count` GRU layers; the head trains whenever count >= 1.
  void set_trainable_tail(ParameterSet& ps, std::size_t count) const {
    if (count > cells.size())
      throw std::invalid_argument("GRU: cannot unfreeze " + std::to_string(count) + " of " +
                                  std::to_string(cells.size()) + " layers");
    for (std::size_t l = 0; l < cells.size(); ++l) cells[l].set_frozen(ps, l + count < cells.size());
    ps.set_frozen(head.weight_name(), count == 0);
    ps.set_frozen(head.bias_name(), count == 0);
  }
};

// ------------------------------------------------------------- windows

struct WindowRef {
  std::size_t recording = 0;
  std::size_t target = 0;  ///< index of the last snapshot of the window
};

/// Every window with a full history: targets window-1 .. snapshots-1-lookahead.
inline std::vector<WindowRef> all_windows(const std::vector<SloshDataset>& data, std::size_t window,
                                          std::size_t lookahead = 0) {
  std::vector<WindowRef> out;
  for (std::size_t r = 0; r < data.size(); ++r)
    for (std::size_t n = window - 1; n + lookahead < data[r].snapshots(); ++n) out.push_back({r, n});
  return out;
}

/// Seeded random split: the first `fraction` of a shuffled copy trains, the rest is held out.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_random(std::vector<T> items, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) throw std::invalid_argument("split fraction must lie in (0, 1)");
  rng.shuffle(items);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
  std::vector<T> held(items.begin() + static_cast<std::ptrdiff_t>(n), items.end());
  items.resize(n);
  return {std::move(items), std::move(held)};
}

/// Window tensors: element k is [refs.size() x 2P], snapshot target-window+1+k of each ref.
inline std::vector<Tensor> window_steps(const std::vector<SloshDataset>& data, const std::vector<WindowRef>& refs,
                                        std::size_t window) {
  if (refs.empty()) throw std::invalid_argument("window_steps: no windows");
  const std::size_t width = data[refs.front().recording].group(kSurfaceGroup).dim;
  std::vector<Tensor> steps(window, Tensor::matrix(refs.size(), width));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& s = data[refs[i].recording].group(kSurfaceGroup);
    if (s.dim != width) throw std::invalid_argument("window_steps: recordings disagree on surface width");
    if (refs[i].target + 1 < window) throw std::invalid_argument("window_steps: target lacks a full history");
    for (std::size_t k = 0; k < window; ++k)
      std::copy_n(s.row(refs[i].target + 1 + k - window), width, steps[k].data() + i * width);
  }
  return steps;
}

/// Rows `snapshot(ref) + offset` of group `name` for each ref.
inline Tensor gather_group(const std::vector<SloshDataset>& data, const std::vector<WindowRef>& refs,
                           const std::string& name, std::size_t offset = 0) {
  const std::size_t dim = data[refs.front().recording].group(name).dim;
  Tensor out = Tensor::matrix(refs.size(), dim);
  for (std::size_t i = 0; i < refs.size(); ++i)
    std::copy_n(data[refs[i].recording].group(name).row(refs[i].target + offset), dim, out.data() + i * dim);
  return out;
}

inline std::vector<double> train_surface_encoder(ParameterSet& ps, const SurfaceEncoder& enc,
                                                 const std::vector<Tensor>& steps, const Tensor& targets,
                                                 const TrainConfig& tc, Rng& rng, const EpochHook& hook = {}) {
  return train_loop(ps, targets.rows(), tc, rng, [&](Tape& t, std::span<const std::size_t> rows) {
    std::vector<Var> in;
    for (const auto& s : steps) in.push_back(t.constant(take_rows(s, rows)));
    return gru_loss(enc.encode(t, ps, in), t.constant(take_rows(targets, rows)));
  }, hook);
}

}  // namespace gsnn
