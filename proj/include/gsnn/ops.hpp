#pragma once

#include "gsnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gsnn {

enum class Activation { linear, relu };

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

// Elementwise op whose derivative is expressed through the input x and output y.
template <class F, class D>
Var elementwise(const char* op, Var x, F f, D dydx) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  Tensor y = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  const std::size_t xi = x.id();
  return t.record(op, std::move(y), {x}, [xi, dydx](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& yv = t.value(self);
    Tensor& gx = t.accumulator(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dydx(xv[i], yv[i]);
  });
}

inline Tensor::Shape row_shape(const Tensor& like, std::size_t cols) {
  if (like.rank() >= 2) return {like.rows(), cols};
  return {cols};
}

}  // namespace detail

/// Y = X Wᵀ for X [B x n] (or [n]) and W [m x n].
inline Var matmul_nt(Var x, Var w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  detail::require(wv.rank() == 2 && xv.rank() >= 1 && xv.rank() <= 2 && xv.cols() == wv.extent(1),
                  "matmul: weight " + wv.shape_string() + " does not conform to input " + xv.shape_string());
  Tensor y(detail::row_shape(xv, wv.extent(0)));
  y.mat().noalias() = xv.mat() * wv.mat().transpose();
  const std::size_t xi = x.id(), wi = w.id();
  return x.tape()->record("matmul", std::move(y), {x, w}, [xi, wi](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.needs_grad(xi)) t.accumulator(xi).mat().noalias() += gy.mat() * t.value(wi).mat();
    if (t.needs_grad(wi)) t.accumulator(wi).mat().noalias() += gy.mat().transpose() * t.value(xi).mat();
  });
}

/// Adds a bias vector b [m] to every row of Y [B x m].
inline Var add_bias(Var y, Var b) {
  const Tensor& yv = y.value();
  const Tensor& bv = b.value();
  detail::require(bv.rank() == 1 && bv.size() == yv.cols(),
                  "add_bias: bias " + bv.shape_string() + " does not conform to " + yv.shape_string());
  Tensor out = yv;
  out.mat().rowwise() += bv.mat().row(0);
  const std::size_t yi = y.id(), bi = b.id();
  return y.tape()->record("add_bias", std::move(out), {y, b}, [yi, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(yi)) t.accumulator(yi).mat() += g.mat();
    if (t.needs_grad(bi)) t.accumulator(bi).mat().row(0) += g.mat().colwise().sum();
  });
}

/// Multiplies every row of X [B x m] elementwise by v [m].
inline Var mul_row(Var x, Var v) {
  const Tensor& xv = x.value();
  const Tensor& vv = v.value();
  detail::require(vv.rank() == 1 && vv.size() == xv.cols(),
                  "mul_row: factor " + vv.shape_string() + " does not conform to " + xv.shape_string());
  Tensor out = xv;
  out.mat().array().rowwise() *= vv.mat().row(0).array();
  const std::size_t xi = x.id(), vi = v.id();
  return x.tape()->record("mul_row", std::move(out), {x, v}, [xi, vi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(xi)) t.accumulator(xi).mat().array() += g.mat().array().rowwise() * t.value(vi).mat().row(0).array();
    if (t.needs_grad(vi))
      t.accumulator(vi).mat().row(0) += (g.mat().array() * t.value(xi).mat().array()).colwise().sum().matrix();
  });
}

inline Var relu(Var x) {
  return detail::elementwise(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var x) {
  return detail::elementwise(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var x) {
  return detail::elementwise(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var square(Var x) {
  return detail::elementwise(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// |x| with subgradient 0 at the origin.
inline Var abs(Var x) {
  return detail::elementwise(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Var scale(Var x, double c) {
  return detail::elementwise(
      "scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var x, double c) {
  return detail::elementwise(
      "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Var apply_activation(Var x, Activation a) { return a == Activation::relu ? relu(x) : x; }

namespace detail {

template <class F, class GA, class GB>
Var binary(const char* op, Var a, Var b, F f, GA ga, GB gb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(op, av, bv);
  Tensor y = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(av[i], bv[i]);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record(op, std::move(y), {a, b}, [ai, bi, ga, gb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& gx = t.accumulator(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * ga(av[i], bv[i]);
    }
    if (t.needs_grad(bi)) {
      Tensor& gx = t.accumulator(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gb(av[i], bv[i]);
    }
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

/// Sum of all entries as a rank-0 scalar.
inline Var sum(Var x) {
  const std::size_t xi = x.id();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape()->record("sum", Tensor::scalar(s), {x}, [xi](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.accumulator(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

/// Mean of all entries as a rank-0 scalar.
inline Var mean(Var x) {
  const std::size_t n = x.value().size();
  detail::require(n > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

/// Per-row sums of X [B x n], shaped [B].
inline Var row_sum(Var x) {
  const Tensor& xv = x.value();
  Tensor y(Tensor::Shape{xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < xv.cols(); ++c) s += xv.at(r, c);
    y[r] = s;
  }
  const std::size_t xi = x.id();
  return x.tape()->record("row_sum", std::move(y), {x}, [xi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.accumulator(xi);
    const std::size_t cols = gx.cols();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[r];
  });
}

/// Columns [begin, begin + count) of X.
inline Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  detail::require(begin + count <= xv.cols(), "slice_cols: range [" + std::to_string(begin) + ", " +
                                                  std::to_string(begin + count) + ") exceeds " + xv.shape_string());
  Tensor y(detail::row_shape(xv, count));
  y.mat() = xv.mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  const std::size_t xi = x.id();
  return x.tape()->record("slice_cols", std::move(y), {x}, [xi, begin, count](Tape& t, std::size_t self) {
    t.accumulator(xi).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        t.grad(self).mat();
  });
}

/// Horizontal concatenation of matrices with equal row counts.
inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const Tensor& first = parts.front().value();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    detail::require(p.value().rows() == first.rows() && p.value().rank() == first.rank(),
                    "concat_cols: row mismatch " + p.value().shape_string() + " vs " + first.shape_string());
    cols += p.value().cols();
  }
  Tensor y(detail::row_shape(first, cols));
  std::vector<std::size_t> ids, widths;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const auto w = p.value().cols();
    y.mat().middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(w)) = p.value().mat();
    ids.push_back(p.id());
    widths.push_back(w);
    at += w;
  }
  return parts.front().tape()->record(
      "concat_cols", std::move(y), std::span<const Var>(parts), [ids, widths](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t at = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.needs_grad(ids[k]))
            t.accumulator(ids[k]).mat() +=
                g.mat().middleCols(static_cast<Eigen::Index>(at), static_cast<Eigen::Index>(widths[k]));
          at += widths[k];
        }
      });
}

/// Selects columns `index` of X in the given order.
inline Var gather_cols(Var x, std::vector<std::size_t> index) {
  const Tensor& xv = x.value();
  for (auto i : index) detail::require(i < xv.cols(), "gather_cols: column " + std::to_string(i) + " out of range");
  Tensor y(detail::row_shape(xv, index.size()));
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t k = 0; k < index.size(); ++k) y[r * index.size() + k] = xv.at(r, index[k]);
  const std::size_t xi = x.id();
  return x.tape()->record("gather_cols", std::move(y), {x}, [xi, index](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.accumulator(xi);
    const std::size_t cols = gx.cols();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t k = 0; k < index.size(); ++k) gx[r * cols + index[k]] += g[r * index.size() + k];
  });
}

/// Places the columns of X at positions `index` of a zero matrix `width` wide.
inline Var scatter_cols(Var x, std::vector<std::size_t> index, std::size_t width) {
  const Tensor& xv = x.value();
  detail::require(index.size() == xv.cols(), "scatter_cols: " + std::to_string(index.size()) +
                                                 " positions for input " + xv.shape_string());
  for (auto i : index) detail::require(i < width, "scatter_cols: column " + std::to_string(i) + " out of range");
  Tensor y(detail::row_shape(xv, width));
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t k = 0; k < index.size(); ++k) y[r * width + index[k]] = xv.at(r, k);
  const std::size_t xi = x.id();
  return x.tape()->record("scatter_cols", std::move(y), {x}, [xi, index, width](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.accumulator(xi);
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t k = 0; k < index.size(); ++k) gx[r * index.size() + k] += g[r * width + index[k]];
  });
}

/// Mean over all entries of (a - b)².
inline Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

/// y = act(x Wᵀ + b).
inline Var dense(Var x, Var w, Var b, Activation act) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require(wv.rank() == 2 && xv.cols() == wv.extent(1) && bv.size() == wv.extent(0),
                  "dense: W " + wv.shape_string() + ", b " + bv.shape_string() + " do not conform to x " +
                      xv.shape_string());
  return apply_activation(add_bias(matmul_nt(x, w), b), act);
}

/// Tape-free evaluation of a single dense layer.
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  Tape t(false);
  return dense(t.constant(x), t.constant(w), t.constant(b), act).value();
}

}  // namespace gsnn
