#pragma once

#include "gsnn/ops.hpp"
#include "gsnn/params.hpp"

#include <string>
#include <vector>

namespace gsnn {

/// Fully connected layer whose weights live in a ParameterSet under `prefix`.
struct DenseLayer {
  std::string prefix;
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::linear;

  std::string weight_name() const { return prefix + ".W"; }
  std::string bias_name() const { return prefix + ".b"; }

  void init(ParameterSet& ps, Rng& rng) const {
    ps.add(weight_name(), xavier_uniform(out, in, rng));
    ps.add(bias_name(), Tensor(Tensor::Shape{out}));
  }

  Var operator()(Tape& t, ParameterSet& ps, Var x) const {
    return dense(x, t.parameter(ps, weight_name()), t.parameter(ps, bias_name()), act);
  }
};

/// A chain of dense layers evaluated in order.
struct DenseStack {
  std::vector<DenseLayer> layers;

  void init(ParameterSet& ps, Rng& rng) const {
    for (const auto& l : layers) l.init(ps, rng);
  }

  Var operator()(Tape& t, ParameterSet& ps, Var x) const {
    for (const auto& l : layers) x = l(t, ps, x);
    return x;
  }

  /// Unfreezes the last `count` layers and freezes the rest.
  void unfreeze_last(ParameterSet& ps, std::size_t count) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const bool train = i + count >= layers.size();
      ps.set_frozen(layers[i].weight_name(), !train);
      ps.set_frozen(layers[i].bias_name(), !train);
    }
  }
};

/// GRU cell in the update/reset/candidate form:
///   z = σ(W_z x + U_z h + b_z)
///   r = σ(W_r x + U_r h + b_r)
///   n = tanh(W_n x + U_n (r ⊙ h) + b_n)
///   h' = (1 - z) ⊙ n + z ⊙ h
struct GruCell {
  std::string prefix;
  std::size_t in = 0;
  std::size_t hidden = 0;

  static constexpr const char* kGates[] = {"z", "r", "n"};

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const char* g : kGates) {
      names.push_back(prefix + ".W" + g);
      names.push_back(prefix + ".U" + g);
      names.push_back(prefix + ".b" + g);
    }
    return names;
  }

  void init(ParameterSet& ps, Rng& rng) const {
    for (const char* g : kGates) {
      ps.add(prefix + ".W" + g, xavier_uniform(hidden, in, rng));
      ps.add(prefix + ".U" + g, xavier_uniform(hidden, hidden, rng));
      ps.add(prefix + ".b" + g, Tensor(Tensor::Shape{hidden}));
    }
  }

  void set_frozen(ParameterSet& ps, bool frozen) const {
    for (const auto& n : parameter_names()) ps.set_frozen(n, frozen);
  }

  Var operator()(Tape& t, ParameterSet& ps, Var x, Var h) const {
    const Tensor& xv = x.value();
    const Tensor& hv = h.value();
    detail::require(xv.cols() == in && hv.cols() == hidden && xv.rows() == hv.rows(),
                    "gru_cell: input " + xv.shape_string() + " / state " + hv.shape_string() +
                        " do not match cell [" + std::to_string(in) + " -> " + std::to_string(hidden) + "]");
    auto p = [&](const std::string& s) { return t.parameter(ps, prefix + "." + s); };
    auto gate_in = [&](const char* g) { return add_bias(matmul_nt(x, p(std::string("W") + g)), p(std::string("b") + g)); };
    Var z = sigmoid(add(gate_in("z"), matmul_nt(h, p("Uz"))));
    Var r = sigmoid(add(gate_in("r"), matmul_nt(h, p("Ur"))));
    Var n = tanh(add(gate_in("n"), matmul_nt(mul(r, h), p("Un"))));
    // (1 - z) ⊙ n + z ⊙ h  ==  n + z ⊙ (h - n)
    return add(n, mul(z, sub(h, n)));
  }
};

/// Tape-free single GRU step.
inline Tensor gru_cell_forward(const Tensor& x, const Tensor& h_prev, ParameterSet& ps, const GruCell& cell) {
  Tape t(false);
  return cell(t, ps, t.constant(x), t.constant(h_prev)).value();
}

}  // namespace gsnn
