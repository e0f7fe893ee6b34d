#pragma once

#include "gsnn/params.hpp"
#include "gsnn/tensor.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gsnn {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  inline const Tensor& value() const;

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records operations in evaluation order and replays them in reverse.
///
/// Gradients flow only into nodes that need them: a node needs a gradient if
/// it is an unfrozen parameter, an explicit variable, or depends on one. With
/// recording disabled no backward closures are stored (inference mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor t) { return push(std::move(t), false, {}, "constant"); }

  /// Leaf that receives a gradient regardless of any parameter set.
  Var variable(Tensor t) { return push(std::move(t), recording_, {}, "variable"); }

  /// Binds a parameter; repeated binds of the same entry share one node.
  Var parameter(ParameterSet& ps, const std::string& name) {
    const auto key = std::make_pair(&ps, name);
    if (auto it = bound_.find(key); it != bound_.end()) return Var(this, it->second);
    const auto& e = ps.entry(name);
    Var v = push(e.value, recording_ && !e.frozen, {}, "parameter");
    bound_.emplace(key, v.id());
    params_.push_back({&ps, name, v.id()});
    return v;
  }

  /// Appends an operation result. `fn` is dropped when no input needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
  }
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& v : inputs) {
      check_owner(v, op);
      needs = needs || nodes_[v.id()].needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, op);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id()).needs_grad; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Upstream gradient of a node during backward; empty if none arrived.
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  const Tensor& grad(Var v) const { return grad(v.id()); }

  /// Zero-initialised accumulator for a node's gradient.
  Tensor& accumulator(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  void backward(Var loss) {
    check_owner(loss, "backward");
    const Tensor& lv = value(loss);
    if (lv.size() != 1)
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + lv.shape_string());
    if (!recording_) throw std::logic_error("backward: tape was created with recording disabled");
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id()].needs_grad) return;
    accumulator(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, i);
    }
  }

  /// Gradients of every bound, unfrozen parameter reachable from the last backward.
  Gradients parameter_gradients() const {
    Gradients g;
    for (const auto& p : params_) {
      const Node& n = nodes_[p.id];
      if (!n.needs_grad) continue;
      g[p.name] = n.grad.size() ? n.grad : Tensor::zeros_like(n.value);
    }
    return g;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  struct Bound {
    ParameterSet* set;
    std::string name;
    std::size_t id;
  };

  Var push(Tensor value, bool needs, BackwardFn fn, const char* op) {
    if (!value.all_finite())
      throw NonFiniteError(std::string(op) + ": produced a non-finite value (shape " + value.shape_string() + ")");
    nodes_.push_back({std::move(value), Tensor(), needs && recording_, recording_ ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  void check_owner(const Var& v, const char* op) const {
    if (v.tape() != this) throw std::invalid_argument(std::string(op) + ": variable belongs to another tape");
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::map<std::pair<ParameterSet*, std::string>, std::size_t> bound_;
  std::vector<Bound> params_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace gsnn
