#pragma once

// Minimal dense-tensor + reverse-mode differentiation engine. Tensors are
// cheap handles onto shared storage; a Tape records one backward closure per
// primitive in execution order, so replaying the closures in reverse visits
// every node exactly once in reverse topological order. Gradients accumulate
// additively across fan-out. 64-bit floats throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ga2c/common.hpp"

namespace ga2c {

using Shape = std::vector<std::size_t>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until a backward pass touches it
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : d_(std::make_shared<detail::TensorData>()) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    if (n != values.size())
      throw ShapeError("tensor values length " + std::to_string(values.size()) +
                       " does not match shape product " + std::to_string(n));
    d_->shape = std::move(shape);
    d_->values = std::move(values);
    d_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  static Tensor row(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v), requires_grad);
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }

  std::size_t rows() const {
    if (d_->shape.size() != 2) throw ShapeError("rows() on non-matrix tensor");
    return d_->shape[0];
  }
  std::size_t cols() const {
    if (d_->shape.size() != 2) throw ShapeError("cols() on non-matrix tensor");
    return d_->shape[1];
  }
  bool is_scalar() const { return size() == 1; }

  double item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor");
    return d_->values[0];
  }

  double operator()(std::size_t i) const { return d_->values[i]; }
  double operator()(std::size_t i, std::size_t j) const {
    return d_->values[i * cols() + j];
  }

  std::vector<double>& values() { return d_->values; }
  const std::vector<double>& values() const { return d_->values; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool rg) { d_->requires_grad = rg; }

  bool has_grad() const { return !d_->grad.empty(); }

  std::vector<double>& grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
    return d_->grad;
  }
  const std::vector<double>& grad() const {
    if (d_->grad.empty()) throw Error("grad accessed before backward populated it");
    return d_->grad;
  }

  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
  }

  // Deep copy detached from any graph; requires_grad is preserved.
  Tensor clone() const {
    Tensor t(d_->shape, d_->values, d_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<detail::TensorData> d_;
};

// Row-compressed sparse matrix. Used for normalized adjacencies and binary
// feature matrices; spmm backward never flows into the sparse operand.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;  // rows + 1 entries
  std::vector<std::size_t> col_idx;
  std::vector<double> vals;

  std::size_t nnz() const { return col_idx.size(); }

  // Triplets must be grouped by row in ascending row order.
  static SparseMatrix from_triplets(
      std::size_t rows, std::size_t cols,
      const std::vector<std::tuple<std::size_t, std::size_t, double>>& triplets) {
    SparseMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (const auto& [r, c, v] : triplets) {
      if (r >= rows || c >= cols) throw IndexError("sparse triplet out of range");
      m.row_ptr[r + 1]++;
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
    m.col_idx.resize(triplets.size());
    m.vals.resize(triplets.size());
    std::vector<std::size_t> cursor(m.row_ptr.begin(), m.row_ptr.end() - 1);
    for (const auto& [r, c, v] : triplets) {
      std::size_t at = cursor[r]++;
      m.col_idx[at] = c;
      m.vals[at] = v;
    }
    return m;
  }
};

enum class ReadoutMode { column_max, column_sum };

enum class EwOp { relu, sigmoid, add, mul, sub, square, abs };

// Records primitives as they execute; backward() replays the closures in
// reverse. One tape per forward pass; tapes are single-threaded.
class Tape {
 public:
  Tensor matmul(Tensor a, Tensor b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
      throw ShapeError("matmul expects matrices");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k)
      throw ShapeError("matmul inner dimensions disagree: " + std::to_string(k) +
                       " vs " + std::to_string(b.rows()));
    Tensor out = Tensor::zeros({m, n});
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = bv + kk * n;
        double* orow = ov + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    record_if({a, b}, out, [a, b, out, m, k, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const auto& bv2 = b.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += gij * bv2[kk * n + j];
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const auto& av2 = a.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av2[i * k + kk];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) gb[kk * n + j] += aik * g[i * n + j];
          }
      }
    });
    return out;
  }

  // s (sparse, constant) times d (dense). Backward flows only into d.
  Tensor spmm(const SparseMatrix& s, Tensor d) {
    if (d.shape().size() != 2) throw ShapeError("spmm expects a dense matrix operand");
    if (s.cols != d.rows())
      throw ShapeError("spmm dimensions disagree: sparse cols " + std::to_string(s.cols) +
                       " vs dense rows " + std::to_string(d.rows()));
    const std::size_t n = d.cols();
    Tensor out = Tensor::zeros({s.rows, n});
    double* ov = out.values().data();
    const double* dv = d.values().data();
    for (std::size_t i = 0; i < s.rows; ++i) {
      double* orow = ov + i * n;
      for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p) {
        const double v = s.vals[p];
        const double* drow = dv + s.col_idx[p] * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += v * drow[j];
      }
    }
    // The sparse operand is adjacency/feature structure, never a parameter.
    SparseMatrix scopy = s;
    record_if({d}, out, [scopy = std::move(scopy), d, out, n]() mutable {
      const auto& g = out.grad();
      auto& gd = d.grad();
      for (std::size_t i = 0; i < scopy.rows; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = scopy.row_ptr[i]; p < scopy.row_ptr[i + 1]; ++p) {
          const double v = scopy.vals[p];
          double* gdrow = gd.data() + scopy.col_idx[p] * n;
          for (std::size_t j = 0; j < n; ++j) gdrow[j] += v * grow[j];
        }
      }
    });
    return out;
  }

  Tensor relu(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.values()[i] = x.values()[i] > 0.0 ? x.values()[i] : 0.0;
    record_if({x}, out, [x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      // relu'(0) = 0 by convention
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (x.values()[i] > 0.0) gx[i] += g[i];
    });
    return out;
  }

  Tensor sigmoid(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.values()[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
    record_if({x}, out, [x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double s = out.values()[i];
        gx[i] += g[i] * s * (1.0 - s);
      }
    });
    return out;
  }

  Tensor square(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.values()[i] = x.values()[i] * x.values()[i];
    record_if({x}, out, [x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * 2.0 * x.values()[i];
    });
    return out;
  }

  Tensor abs(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = std::fabs(x.values()[i]);
    record_if({x}, out, [x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      // abs'(0) = 0 by convention
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = x.values()[i];
        if (v > 0.0)
          gx[i] += g[i];
        else if (v < 0.0)
          gx[i] -= g[i];
      }
    });
    return out;
  }

  Tensor add(Tensor a, Tensor b) { return binary(EwOp::add, a, b); }
  Tensor sub(Tensor a, Tensor b) { return binary(EwOp::sub, a, b); }
  Tensor mul(Tensor a, Tensor b) { return binary(EwOp::mul, a, b); }

  Tensor add_scalar(Tensor a, double c) { return add(a, Tensor::scalar(c)); }
  Tensor mul_scalar(Tensor a, double c) { return mul(a, Tensor::scalar(c)); }

  // Dispatch form of the elementwise family.
  Tensor elementwise(EwOp op, Tensor a, const Tensor* b = nullptr) {
    switch (op) {
      case EwOp::relu: return relu(a);
      case EwOp::sigmoid: return sigmoid(a);
      case EwOp::square: return square(a);
      case EwOp::abs: return abs(a);
      case EwOp::add:
      case EwOp::sub:
      case EwOp::mul:
        if (!b) throw ShapeError("binary elementwise op needs two operands");
        return binary(op, a, *b);
    }
    throw Error("unreachable elementwise op");
  }

  Tensor log(Tensor x) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = std::log(x.values()[i]);
    record_if({x}, out, [x, out]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / x.values()[i];
    });
    return out;
  }

  // Gradient passes through only where lo <= x <= hi.
  Tensor clamp(Tensor x, double lo, double hi) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      out.values()[i] = std::min(hi, std::max(lo, x.values()[i]));
    record_if({x}, out, [x, out, lo, hi]() mutable {
      const auto& g = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = x.values()[i];
        if (v >= lo && v <= hi) gx[i] += g[i];
      }
    });
    return out;
  }

  // Forward rounds to {0,1}; backward is the identity (straight-through).
  Tensor straight_through_round(Tensor relaxed) {
    Tensor out = Tensor::zeros(relaxed.shape());
    for (std::size_t i = 0; i < relaxed.size(); ++i)
      out.values()[i] = std::floor(relaxed.values()[i] + 0.5);
    record_if({relaxed}, out, [relaxed, out]() mutable {
      const auto& g = out.grad();
      auto& gx = relaxed.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
    return out;
  }

  // Entries equal to -inf are excluded exactly (probability 0, no gradient).
  Tensor softmax_row(Tensor logits) {
    if (logits.shape().size() != 1) throw ShapeError("softmax_row expects a vector");
    const std::size_t n = logits.size();
    double mx = kNegInf;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = logits.values()[i];
      if (!std::isfinite(v) && v != kNegInf)
        throw ShapeError("softmax_row requires finite logits (or -inf sentinel)");
      mx = std::max(mx, v);
    }
    if (mx == kNegInf) throw EmptyDistributionError("all logits masked in softmax_row");
    Tensor out = Tensor::zeros({n});
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = logits.values()[i];
      const double e = v == kNegInf ? 0.0 : std::exp(v - mx);
      out.values()[i] = e;
      z += e;
    }
    for (std::size_t i = 0; i < n; ++i) out.values()[i] /= z;
    record_if({logits}, out, [logits, out, n]() mutable {
      const auto& g = out.grad();
      const auto& p = out.values();
      auto& gx = logits.grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * p[i];
      for (std::size_t i = 0; i < n; ++i) gx[i] += p[i] * (g[i] - dot);
    });
    return out;
  }

  // -log softmax(logits)[target]; backward is softmax(logits) - onehot(target).
  Tensor log_softmax_nll(Tensor logits, std::size_t target) {
    if (logits.shape().size() != 1) throw ShapeError("log_softmax_nll expects a vector");
    const std::size_t n = logits.size();
    if (target >= n)
      throw IndexError("nll target " + std::to_string(target) + " out of range " +
                       std::to_string(n));
    double mx = kNegInf;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logits.values()[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits.values()[i] - mx);
    const double logz = std::log(z) + mx;
    Tensor out = Tensor::scalar(logz - logits.values()[target]);
    record_if({logits}, out, [logits, out, target, n, logz]() mutable {
      const double g = out.grad()[0];
      auto& gx = logits.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double p = std::exp(logits.values()[i] - logz);
        gx[i] += g * (p - (i == target ? 1.0 : 0.0));
      }
    });
    return out;
  }

  Tensor readout(Tensor h, ReadoutMode mode) {
    if (h.shape().size() != 2) throw ShapeError("readout expects a matrix");
    const std::size_t n = h.rows(), d = h.cols();
    if (n == 0) throw EmptyGraphError("readout over zero rows");
    Tensor out = Tensor::zeros({d});
    if (mode == ReadoutMode::column_sum) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.values()[j] += h(i, j);
      record_if({h}, out, [h, out, n, d]() mutable {
        const auto& g = out.grad();
        auto& gh = h.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gh[i * d + j] += g[j];
      });
    } else {
      std::vector<std::size_t> argmax(d, 0);
      for (std::size_t j = 0; j < d; ++j) {
        double best = h(0, j);
        for (std::size_t i = 1; i < n; ++i)
          if (h(i, j) > best) {  // ties keep the first row
            best = h(i, j);
            argmax[j] = i;
          }
        out.values()[j] = best;
      }
      record_if({h}, out, [h, out, argmax = std::move(argmax), d]() mutable {
        const auto& g = out.grad();
        auto& gh = h.grad();
        for (std::size_t j = 0; j < d; ++j) gh[argmax[j] * d + j] += g[j];
      });
    }
    return out;
  }

  Tensor select_row(Tensor m, std::size_t r) {
    if (m.shape().size() != 2) throw ShapeError("select_row expects a matrix");
    if (r >= m.rows()) throw IndexError("select_row out of range");
    const std::size_t d = m.cols();
    Tensor out = Tensor::zeros({d});
    for (std::size_t j = 0; j < d; ++j) out.values()[j] = m(r, j);
    record_if({m}, out, [m, out, r, d]() mutable {
      const auto& g = out.grad();
      auto& gm = m.grad();
      for (std::size_t j = 0; j < d; ++j) gm[r * d + j] += g[j];
    });
    return out;
  }

  Tensor select_index(Tensor v, std::size_t i) {
    if (v.shape().size() != 1) throw ShapeError("select_index expects a vector");
    if (i >= v.size()) throw IndexError("select_index out of range");
    Tensor out = Tensor::scalar(v.values()[i]);
    record_if({v}, out, [v, out, i]() mutable { v.grad()[i] += out.grad()[0]; });
    return out;
  }

  Tensor slice(Tensor v, std::size_t start, std::size_t len) {
    if (v.shape().size() != 1) throw ShapeError("slice expects a vector");
    if (start + len > v.size()) throw IndexError("slice out of range");
    Tensor out = Tensor::zeros({len});
    for (std::size_t j = 0; j < len; ++j) out.values()[j] = v.values()[start + j];
    record_if({v}, out, [v, out, start, len]() mutable {
      const auto& g = out.grad();
      auto& gv = v.grad();
      for (std::size_t j = 0; j < len; ++j) gv[start + j] += g[j];
    });
    return out;
  }

  Tensor concat(Tensor a, Tensor b) {
    if (a.shape().size() != 1 || b.shape().size() != 1)
      throw ShapeError("concat expects vectors");
    const std::size_t na = a.size(), nb = b.size();
    Tensor out = Tensor::zeros({na + nb});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + na);
    record_if({a, b}, out, [a, b, out, na, nb]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
      }
    });
    return out;
  }

  Tensor vstack(Tensor a, Tensor b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.cols())
      throw ShapeError("vstack expects matrices with equal column counts");
    const std::size_t d = a.cols(), ra = a.rows(), rb = b.rows();
    Tensor out = Tensor::zeros({ra + rb, d});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + ra * d);
    record_if({a, b}, out, [a, b, out, ra, rb, d]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ra * d; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < rb * d; ++i) gb[i] += g[ra * d + i];
      }
    });
    return out;
  }

  // Stacks k same-length vectors into a k x d matrix.
  Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw EmptyInputError("stack_rows of zero rows");
    const std::size_t d = rows[0].size();
    for (const auto& r : rows)
      if (r.shape().size() != 1 || r.size() != d)
        throw ShapeError("stack_rows requires equal-length vectors");
    Tensor out = Tensor::zeros({rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].values().begin(), rows[i].values().end(),
                out.values().begin() + i * d);
    bool any = false;
    for (const auto& r : rows) any = any || r.requires_grad();
    if (any) {
      out.set_requires_grad(true);
      auto rcopy = rows;
      steps_.push_back([rcopy = std::move(rcopy), out, d]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        for (std::size_t i = 0; i < rcopy.size(); ++i) {
          if (!rcopy[i].requires_grad()) continue;
          auto& gr = rcopy[i].grad();
          for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
        }
      });
    }
    return out;
  }

  // (n x d) matrix times length-d vector.
  Tensor matvec(Tensor m, Tensor v) {
    if (m.shape().size() != 2 || v.shape().size() != 1 || m.cols() != v.size())
      throw ShapeError("matvec dimensions disagree");
    const std::size_t n = m.rows(), d = m.cols();
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += m(i, j) * v.values()[j];
      out.values()[i] = acc;
    }
    record_if({m, v}, out, [m, v, out, n, d]() mutable {
      const auto& g = out.grad();
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gm[i * d + j] += g[i] * v.values()[j];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gv[j] += g[i] * m.values()[i * d + j];
      }
    });
    return out;
  }

  // Length-m vector times (m x n) matrix.
  Tensor vecmat(Tensor v, Tensor m) {
    if (m.shape().size() != 2 || v.shape().size() != 1 || m.rows() != v.size())
      throw ShapeError("vecmat dimensions disagree");
    const std::size_t mm = m.rows(), n = m.cols();
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < mm; ++i) {
      const double vi = v.values()[i];
      if (vi == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.values()[j] += vi * m(i, j);
    }
    record_if({v, m}, out, [v, m, out, mm, n]() mutable {
      const auto& g = out.grad();
      if (v.requires_grad()) {
        auto& gv = v.grad();
        for (std::size_t i = 0; i < mm; ++i)
          for (std::size_t j = 0; j < n; ++j) gv[i] += g[j] * m.values()[i * n + j];
      }
      if (m.requires_grad()) {
        auto& gm = m.grad();
        for (std::size_t i = 0; i < mm; ++i) {
          const double vi = v.values()[i];
          if (vi == 0.0) continue;  // d out / d m[i][j] = v[i]
          for (std::size_t j = 0; j < n; ++j) gm[i * n + j] += vi * g[j];
        }
      }
    });
    return out;
  }

  Tensor dot(Tensor a, Tensor b) {
    if (a.shape().size() != 1 || b.shape().size() != 1 || a.size() != b.size())
      throw ShapeError("dot expects equal-length vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.values()[i] * b.values()[i];
    Tensor out = Tensor::scalar(acc);
    record_if({a, b}, out, [a, b, out]() mutable {
      const double g = out.grad()[0];
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * a.values()[i];
      }
    });
    return out;
  }

  Tensor sum(Tensor x) {
    double acc = std::accumulate(x.values().begin(), x.values().end(), 0.0);
    Tensor out = Tensor::scalar(acc);
    record_if({x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
    return out;
  }

  Tensor add_n(const std::vector<Tensor>& terms) {
    if (terms.empty()) throw EmptyInputError("add_n of zero terms");
    Tensor out = Tensor::zeros(terms[0].shape());
    for (const auto& t : terms) {
      if (t.shape() != terms[0].shape()) throw ShapeError("add_n shapes disagree");
      for (std::size_t i = 0; i < t.size(); ++i) out.values()[i] += t.values()[i];
    }
    bool any = false;
    for (const auto& t : terms) any = any || t.requires_grad();
    if (any) {
      out.set_requires_grad(true);
      auto tcopy = terms;
      steps_.push_back([tcopy = std::move(tcopy), out]() mutable {
        if (!out.has_grad()) return;
        const auto& g = out.grad();
        for (auto& t : tcopy) {
          if (!t.requires_grad()) continue;
          auto& gt = t.grad();
          for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        }
      });
    }
    return out;
  }

  // Seeds d(loss)/d(loss) = 1 and replays recorded closures in reverse.
  void backward(Tensor loss) {
    if (!loss.is_scalar()) throw ShapeError("backward expects a scalar loss");
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }

  std::size_t num_recorded() const { return steps_.size(); }
  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;

  void record_if(std::initializer_list<Tensor> inputs, Tensor& out,
                 std::function<void()> back) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    out.set_requires_grad(true);
    steps_.push_back([back = std::move(back), out]() {
      if (!out.has_grad()) return;  // branch never reached the loss
      back();
    });
  }

  // Elementwise binary with scalar-with-tensor broadcast only.
  Tensor binary(EwOp op, Tensor a, Tensor b) {
    const bool a_scalar = a.is_scalar(), b_scalar = b.is_scalar();
    if (!(a.shape() == b.shape() || a_scalar || b_scalar))
      throw ShapeError("elementwise shapes incompatible (broadcast is scalar-with-tensor only)");
    const Shape& shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    Tensor out = Tensor::zeros(shape);
    auto va = [&](std::size_t i) { return a.values()[a_scalar ? 0 : i]; };
    auto vb = [&](std::size_t i) { return b.values()[b_scalar ? 0 : i]; };
    for (std::size_t i = 0; i < n; ++i) {
      switch (op) {
        case EwOp::add: out.values()[i] = va(i) + vb(i); break;
        case EwOp::sub: out.values()[i] = va(i) - vb(i); break;
        case EwOp::mul: out.values()[i] = va(i) * vb(i); break;
        default: throw Error("unreachable binary op");
      }
    }
    record_if({a, b}, out, [op, a, b, out, a_scalar, b_scalar, n]() mutable {
      const auto& g = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (op == EwOp::mul) d *= b.values()[b_scalar ? 0 : i];
          ga[a_scalar ? 0 : i] += d;
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (std::size_t i = 0; i < n; ++i) {
          double d = g[i];
          if (op == EwOp::sub) d = -d;
          if (op == EwOp::mul) d = g[i] * a.values()[a_scalar ? 0 : i];
          gb[b_scalar ? 0 : i] += d;
        }
      }
    });
    return out;
  }
};

}  // namespace ga2c
