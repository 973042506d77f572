#pragma once

// Test-only oracles, independent of the library's forward/backward paths:
// central finite differences, a dense matmul with its own loop order, BFS,
// and a brute-force densify for sparse products.

#include <cmath>
#include <functional>
#include <queue>
#include <set>
#include <vector>

#include "ga2c/graph.hpp"
#include "ga2c/tensor.hpp"

namespace oracles {

inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-2, std::fabs(a), std::fabs(b)});
}

// Checks autodiff gradients of `forward` (a fresh-tape scalar evaluation)
// against central finite differences for every requires_grad parameter.
// Returns the worst relative error seen.
template <typename Forward>
double max_grad_error(std::vector<ga2c::Tensor> params, Forward&& forward,
                      double step = 1e-5) {
  ga2c::Tape tape;
  ga2c::Tensor loss = forward(tape);
  tape.backward(loss);
  double worst = 0.0;
  for (auto& p : params) {
    if (!p.requires_grad()) continue;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p.values()[i];
      p.values()[i] = v + step;
      double up;
      {
        ga2c::Tape t2;
        up = forward(t2).item();
      }
      p.values()[i] = v - step;
      double dn;
      {
        ga2c::Tape t2;
        dn = forward(t2).item();
      }
      p.values()[i] = v;
      const double fd = (up - dn) / (2.0 * step);
      const double analytic = p.has_grad() ? p.grad()[i] : 0.0;
      worst = std::max(worst, rel_err(analytic, fd));
    }
  }
  return worst;
}

// Plain j-k ordered dense product, written independently of Tape::matmul.
inline std::vector<double> dense_matmul(const std::vector<double>& a,
                                        const std::vector<double>& b, std::size_t m,
                                        std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t kk = 0; kk < k; ++kk)
      for (std::size_t i = 0; i < m; ++i) out[i * n + j] += a[i * k + kk] * b[kk * n + j];
  return out;
}

inline std::vector<double> densify(const ga2c::SparseMatrix& s) {
  std::vector<double> out(s.rows * s.cols, 0.0);
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t p = s.row_ptr[i]; p < s.row_ptr[i + 1]; ++p)
      out[i * s.cols + s.col_idx[p]] += s.vals[p];
  return out;
}

// Breadth-first K-hop ball, independent of k_order_subgraph.
inline std::set<ga2c::NodeId> bfs_ball(const ga2c::AttackedGraph& g, ga2c::NodeId v,
                                       std::size_t k) {
  std::set<ga2c::NodeId> seen{v};
  std::queue<std::pair<ga2c::NodeId, std::size_t>> q;
  q.push({v, 0});
  while (!q.empty()) {
    auto [u, d] = q.front();
    q.pop();
    if (d == k) continue;
    for (ga2c::NodeId w : g.neighbors(u))
      if (seen.insert(w).second) q.push({w, d + 1});
  }
  return seen;
}

}  // namespace oracles
