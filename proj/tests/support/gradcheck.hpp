#pragma once

// Central finite-difference oracle for tape gradients. Independent of the
// backward closures: it only evaluates forward values.

#include "gsnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace gsnn::testing {

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t checked = 0;
};

/// Fourth-order central difference of f with respect to x; x is restored.
/// The wider stencil keeps roundoff in f well below the 1e-5 tolerance even
/// when f is large compared with the derivative being checked.
inline double central_difference(const std::function<double()>& f, double& x) {
  const double x0 = x;
  const double h = 1e-4 * std::max(1.0, std::fabs(x0));
  auto at = [&](double v) {
    x = v;
    return f();
  };
  const double d = 8.0 * (at(x0 + h) - at(x0 - h)) - (at(x0 + 2 * h) - at(x0 - 2 * h));
  x = x0;
  return d / (12.0 * h);
}

/// Denominator floor keeps entries whose true gradient is ~0 from being
/// judged on roundoff alone.
inline GradCheckResult gradcheck(const ScalarFn& f, std::vector<Tensor> inputs, double floor = 1e-4) {
  std::vector<Tensor> analytic;
  {
    Tape t;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(t.variable(x));
    Var loss = f(t, vars);
    t.backward(loss);
    for (const auto& v : vars) analytic.push_back(t.grad(v).size() ? t.grad(v) : Tensor::zeros_like(v.value()));
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape t(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(t.constant(x));
    return f(t, vars).value().item();
  };
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double numeric = central_difference([&] { return eval(inputs); }, inputs[k][i]);
      const double a = analytic[k][i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      res.max_abs_grad = std::max(res.max_abs_grad, std::fabs(a));
      ++res.checked;
    }
  }
  return res;
}

/// Same check against the gradients the tape reports for every trainable entry of `ps`.
inline double param_gradcheck(ParameterSet& ps, const std::function<Var(Tape&, ParameterSet&)>& f,
                              double floor = 1e-4) {
  Tape t;
  t.backward(f(t, ps));
  const Gradients g = t.parameter_gradients();
  auto eval = [&] {
    Tape e(false);
    return f(e, ps).value().item();
  };
  double worst = 0.0;
  for (auto& entry : ps.entries()) {
    if (entry.frozen) continue;
    const Tensor& a = g.at(entry.name);
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const double num = central_difference(eval, entry.value[i]);
      worst = std::max(worst, std::fabs(a[i] - num) / std::max({std::fabs(a[i]), std::fabs(num), floor}));
    }
  }
  return worst;
}

inline Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace gsnn::testing
