#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "giplab/error.hpp"
#include "giplab/graph.hpp"
#include "giplab/matrix.hpp"

namespace giplab {

namespace dense {

// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + a.shape_str() + " * " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix c(m, n);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* cd = c.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      const double* br = bd + p * n;
      double* cr = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  return c;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + a.shape_str() + " * (" + b.shape_str() + ")^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      auto br = b.row(j);
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      c(i, j) = s;
    }
  }
  return c;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ShapeError("matmul_tn: (" + a.shape_str() + ")^T * " + b.shape_str());
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Matrix c(m, n);
  for (std::size_t p = 0; p < k; ++p) {
    auto ar = a.row(p);
    auto br = b.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      auto cr = c.row(i);
      for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline void add_inplace(Matrix& dst, const Matrix& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw ShapeError("add: " + dst.shape_str() + " vs " + src.shape_str());
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

}  // namespace dense

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; invalid once the
// tape is cleared.
class Var {
 public:
  Var() = default;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  inline const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients of a scalar with respect to every requires_grad leaf.
class Gradients {
 public:
  const Matrix& operator[](Var v) const {
    auto it = grads_.find(v.id());
    if (it == grads_.end()) throw ConfigError("no gradient recorded for this variable");
    return it->second;
  }
  bool contains(Var v) const { return grads_.count(v.id()) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Matrix> grads_;
};

// Append-only record of forward operations. Inputs always precede their
// consumers, so a reverse sweep is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(const Matrix& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true) {
    check_finite(value, "leaf");
    nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, true, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Records an op output. The backward rule is dropped when no input needs
  // a gradient.
  Var record(std::string_view op, Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    check_finite(value, op);
    bool needs = false;
    for (Var in : inputs) {
      if (in.tape() != this) throw ConfigError(std::string(op) + ": operand from another tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), Matrix{}, needs, false, needs ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  // Adds `g` into the gradient buffer of `v` if it participates.
  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
    } else {
      dense::add_inplace(n.grad, g);
    }
  }

  void accumulate(Var v, Matrix&& g) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = std::move(g);
    } else {
      dense::add_inplace(n.grad, g);
    }
  }

  bool wants_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Reverse sweep from a 1x1 loss. Returns gradients for every
  // requires_grad leaf (zeros when unreachable) and clears the tape.
  Gradients backward(Var loss) {
    if (loss.tape() != this) throw ConfigError("backward: loss from another tape");
    const Matrix& lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ShapeError("backward: loss must be 1x1, got " + lv.shape_str());
    accumulate(loss, Matrix(1, 1, 1.0));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.is_leaf || !n.backward || n.grad.empty()) continue;
      Matrix g = std::move(n.grad);
      n.backward(g, *this);
    }
    Gradients out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (!n.is_leaf || !n.requires_grad) continue;
      out.grads_[i] = n.grad.empty() ? Matrix(n.value.rows(), n.value.cols()) : std::move(n.grad);
    }
    clear();
    return out;
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  static void check_finite(const Matrix& m, std::string_view op) {
    if (!m.all_finite()) throw NumericError("non-finite value produced by " + std::string(op));
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

namespace detail {
inline void same_shape(const Matrix& a, const Matrix& b, std::string_view op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": " + a.shape_str() + " vs " + b.shape_str());
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = *a.tape();
  Matrix out = dense::matmul(a.value(), b.value());
  return t.record("matmul", std::move(out), {a, b}, [a, b](const Matrix& g, Tape& tp) {
    if (tp.wants_grad(a)) tp.accumulate(a, dense::matmul_nt(g, b.value()));
    if (tp.wants_grad(b)) tp.accumulate(b, dense::matmul_tn(a.value(), g));
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.record("transpose", dense::transpose(a.value()), {a},
                  [a](const Matrix& g, Tape& tp) { tp.accumulate(a, dense::transpose(g)); });
}

// y = A x for a symmetric sparse A; the adjacency must outlive backward,
// hence the shared ownership.
inline Var spmm(std::shared_ptr<const SparseAdjacency> adj, Var x) {
  Tape& t = *x.tape();
  Matrix out = adj->multiply(x.value());
  return t.record("spmm", std::move(out), {x}, [adj, x](const Matrix& g, Tape& tp) {
    tp.accumulate(x, adj->multiply(g));
  });
}

inline Var add(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  dense::add_inplace(out, b.value());
  return a.tape()->record("add", std::move(out), {a, b}, [a, b](const Matrix& g, Tape& tp) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  return a.tape()->record("sub", std::move(out), {a, b}, [a, b](const Matrix& g, Tape& tp) {
    tp.accumulate(a, g);
    if (tp.wants_grad(b)) {
      Matrix neg = g;
      for (double& v : neg.data()) v = -v;
      tp.accumulate(b, std::move(neg));
    }
  });
}

inline Var hadamard(Var a, Var b) {
  detail::same_shape(a.value(), b.value(), "hadamard");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  return a.tape()->record("hadamard", std::move(out), {a, b}, [a, b](const Matrix& g, Tape& tp) {
    if (tp.wants_grad(a)) {
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] *= b.value().data()[i];
      tp.accumulate(a, std::move(ga));
    }
    if (tp.wants_grad(b)) {
      Matrix gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] *= a.value().data()[i];
      tp.accumulate(b, std::move(gb));
    }
  });
}

// x + 1 * bias, bias is 1 x cols
inline Var add_bias_row(Var x, Var bias) {
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw ShapeError("add_bias_row: " + xv.shape_str() + " + " + bv.shape_str());
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] += bv(0, c);
  }
  return x.tape()->record("add_bias_row", std::move(out), {x, bias}, [x, bias](const Matrix& g, Tape& tp) {
    tp.accumulate(x, g);
    if (tp.wants_grad(bias)) {
      Matrix gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      tp.accumulate(bias, std::move(gb));
    }
  });
}

inline Var scale(Var x, double c) {
  Matrix out = x.value();
  for (double& v : out.data()) v *= c;
  return x.tape()->record("scale", std::move(out), {x}, [x, c](const Matrix& g, Tape& tp) {
    Matrix gx = g;
    for (double& v : gx.data()) v *= c;
    tp.accumulate(x, std::move(gx));
  });
}

// Subgradient at exactly 0 is 0.
inline Var relu(Var x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape()->record("relu", std::move(out), {x}, [x](const Matrix& g, Tape& tp) {
    Matrix gx = g;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!(xv[i] > 0.0)) gx.data()[i] = 0.0;
    tp.accumulate(x, std::move(gx));
  });
}

// Row i of the result sums the rows of x whose segment id is i.
inline Var segment_sum(Var x, const std::vector<std::size_t>& segment, std::size_t num_segments) {
  const Matrix& xv = x.value();
  if (segment.size() != xv.rows())
    throw ShapeError("segment_sum: " + std::to_string(segment.size()) + " ids for " +
                     std::to_string(xv.rows()) + " rows");
  Matrix out(num_segments, xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    if (segment[r] >= num_segments) throw ShapeError("segment_sum: segment id out of range");
    if (r > 0 && segment[r] < segment[r - 1]) throw ShapeError("segment_sum: ids not sorted");
    auto src = xv.row(r);
    auto dst = out.row(segment[r]);
    for (std::size_t c = 0; c < xv.cols(); ++c) dst[c] += src[c];
  }
  return x.tape()->record("segment_sum", std::move(out), {x}, [x, segment](const Matrix& g, Tape& tp) {
    Matrix gx(segment.size(), g.cols());
    for (std::size_t r = 0; r < segment.size(); ++r) {
      auto src = g.row(segment[r]);
      std::copy(src.begin(), src.end(), gx.row(r).begin());
    }
    tp.accumulate(x, std::move(gx));
  });
}

inline constexpr double kNormFloor = 1e-8;

// Each row divided by max(||row||, 1e-8).
inline Var row_l2_normalize(Var x) {
  const Matrix& xv = x.value();
  Matrix out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double s = 0.0;
    for (double v : xv.row(r)) s += v * v;
    norms[r] = std::max(std::sqrt(s), kNormFloor);
    for (double& v : out.row(r)) v /= norms[r];
  }
  return x.tape()->record("row_l2_normalize", std::move(out), {x},
                          [x, norms](const Matrix& g, Tape& tp) {
    const Matrix& xv = x.value();
    Matrix gx(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const double n = norms[r];
      auto gr = g.row(r);
      auto xr = xv.row(r);
      auto dr = gx.row(r);
      if (n > kNormFloor) {
        // (g - y (y.g)) / n with y = x / n
        double yg = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) yg += xr[c] / n * gr[c];
        for (std::size_t c = 0; c < g.cols(); ++c) dr[c] = (gr[c] - xr[c] / n * yg) / n;
      } else {
        for (std::size_t c = 0; c < g.cols(); ++c) dr[c] = gr[c] / n;
      }
    }
    tp.accumulate(x, std::move(gx));
  });
}

// Columns shifted to zero mean and divided by max(population std, 1e-8).
inline Var batch_standardize(Var x) {
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (n < 2) throw ShapeError("batch_standardize: need at least 2 rows");
  std::vector<double> sd(d);
  Matrix out(n, d);
  for (std::size_t c = 0; c < d; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < n; ++r) mu += xv(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(n);
    sd[c] = std::max(std::sqrt(var), kNormFloor);
    for (std::size_t r = 0; r < n; ++r) out(r, c) = (xv(r, c) - mu) / sd[c];
  }
  Matrix y = out;
  return x.tape()->record("batch_standardize", std::move(out), {x},
                          [x, sd, y = std::move(y)](const Matrix& g, Tape& tp) {
    const std::size_t n = g.rows(), d = g.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix gx(n, d);
    for (std::size_t c = 0; c < d; ++c) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        mean_g += g(r, c);
        mean_gy += g(r, c) * y(r, c);
      }
      mean_g *= inv_n;
      mean_gy *= inv_n;
      const bool floored = !(sd[c] > kNormFloor);
      for (std::size_t r = 0; r < n; ++r)
        gx(r, c) = floored ? (g(r, c) - mean_g) / sd[c]
                           : (g(r, c) - mean_g - y(r, c) * mean_gy) / sd[c];
    }
    tp.accumulate(x, std::move(gx));
  });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t r = x.rows(), c = x.cols();
  return x.tape()->record("sum", Matrix(1, 1, s), {x}, [x, r, c](const Matrix& g, Tape& tp) {
    tp.accumulate(x, Matrix(r, c, g(0, 0)));
  });
}

inline Var mean(Var x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

// sum(x .* weights) for a constant weight matrix.
inline Var weighted_sum(Var x, Matrix weights) {
  detail::same_shape(x.value(), weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value().data()[i] * weights.data()[i];
  return x.tape()->record("weighted_sum", Matrix(1, 1, s), {x},
                          [x, w = std::move(weights)](const Matrix& g, Tape& tp) {
    Matrix gx = w;
    for (double& v : gx.data()) v *= g(0, 0);
    tp.accumulate(x, std::move(gx));
  });
}

// Per-row log(sum(exp(row))) with max subtraction; n x 1.
inline Var logsumexp_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto row = xv.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - m);
    out(r, 0) = m + std::log(s);
  }
  Matrix lse = out;
  return x.tape()->record("logsumexp_rows", std::move(out), {x},
                          [x, lse = std::move(lse)](const Matrix& g, Tape& tp) {
    const Matrix& xv = x.value();
    Matrix gx(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (std::size_t c = 0; c < xv.cols(); ++c) gx(r, c) = g(r, 0) * std::exp(xv(r, c) - lse(r, 0));
    tp.accumulate(x, std::move(gx));
  });
}

// Diagonal of a square matrix as an n x 1 column.
inline Var diag(Var x) {
  const Matrix& xv = x.value();
  if (xv.rows() != xv.cols()) throw ShapeError("diag: matrix not square " + xv.shape_str());
  Matrix out(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) out(i, 0) = xv(i, i);
  const std::size_t n = xv.rows();
  return x.tape()->record("diag", std::move(out), {x}, [x, n](const Matrix& g, Tape& tp) {
    Matrix gx(n, n);
    for (std::size_t i = 0; i < n; ++i) gx(i, i) = g(i, 0);
    tp.accumulate(x, std::move(gx));
  });
}

// log(sigmoid(x)) = -log1p(exp(-x)), evaluated stably on both tails.
inline Var log_sigmoid(Var x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  return x.tape()->record("log_sigmoid", std::move(out), {x}, [x](const Matrix& g, Tape& tp) {
    Matrix gx = g;
    const auto& xv = x.value().data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xv[i];
      // d/dx log sigma(x) = sigma(-x)
      const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
      gx.data()[i] *= s;
    }
    tp.accumulate(x, std::move(gx));
  });
}

// Same value, no gradient flow.
inline Var stop_gradient(Var x) { return x.tape()->constant(x.value()); }

}  // namespace giplab
