#pragma once
// Finite-difference weights on arbitrary nodes and the radial stencils used on
// cell-centred grids. Inner and outer ends may close by parity reflection
// through the pole (value at -r is the value at +r on the opposite ray).

#include <cmath>
#include <stdexcept>
#include <vector>

namespace edgeflat {

// Weights w[k][j] for the k-th derivative at x0 from nodes x[j], k <= order.
inline std::vector<std::vector<double>> fd_weights(double x0, const std::vector<double>& x,
                                                   int order) {
  const int n = int(x.size());
  std::vector<std::vector<double>> c(order + 1, std::vector<double>(n, 0.0));
  double c1 = 1.0, c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < n; ++i) {
    int mn = std::min(i, order);
    double c2 = 1.0, c5 = c4;
    c4 = x[i] - x0;
    for (int j = 0; j < i; ++j) {
      double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[k][i] = c1 * (k * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
        c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
      }
      for (int k = mn; k >= 1; --k) c[k][j] = (c4 * c[k][j] - k * c[k - 1][j]) / c3;
      c[0][j] = c4 * c[0][j] / c3;
    }
    c1 = c2;
  }
  return c;
}

enum class Closure { parity, one_sided, dirichlet };

// One stencil entry: node index, whether the value is read on the opposite
// ray (parity ghost), and weights for first and second derivative.
struct StencilTerm {
  int node;
  bool flip;
  double d1, d2;
};

struct RadialRow {
  std::vector<StencilTerm> terms;
  double bd1 = 0, bd2 = 0;  // weight on the boundary value (dirichlet closure)
};

// Cell-centred nodes r_i = a + (i + 1/2) h, i = 0..n-1, on [a, a + n h].
// Parity closure at the lower end requires a = 0 (pole); at the upper end it
// reflects through a pole at a + n h.
class RadialStencil {
 public:
  RadialStencil(int n, double h, Closure inner, Closure outer, double origin = 0.0)
      : n_(n), h_(h), origin_(origin), inner_(inner), outer_(outer) {
    if (n < 8) throw std::invalid_argument("radial stencil needs at least 8 nodes");
    if (inner == Closure::dirichlet) throw std::invalid_argument("inner dirichlet unsupported");
    rows_.resize(n);
    for (int i = 0; i < n; ++i) rows_[i] = build(i);
  }

  int size() const { return n_; }
  double h() const { return h_; }
  double node(int i) const { return origin_ + (i + 0.5) * h_; }
  double outer_edge() const { return origin_ + n_ * h_; }
  const RadialRow& row(int i) const { return rows_[i]; }
  Closure outer() const { return outer_; }
  Closure inner() const { return inner_; }

  // Lower/upper bandwidth of the row stencils in node index (ignoring flips).
  int lower_band() const {
    int b = 0;
    for (int i = 0; i < n_; ++i)
      for (auto& t : rows_[i].terms) b = std::max(b, i - t.node);
    return b;
  }
  int upper_band() const {
    int b = 0;
    for (int i = 0; i < n_; ++i)
      for (auto& t : rows_[i].terms) b = std::max(b, t.node - i);
    return b;
  }

 private:
  RadialRow build(int i) const {
    std::vector<double> xs;
    std::vector<int> idx;
    std::vector<bool> flip;
    double bx = 0;
    bool has_boundary = false;
    auto push = [&](int j) {
      // j may run past either end; map through the closure.
      if (j < 0) {
        if (inner_ != Closure::parity) throw std::logic_error("stencil underflow");
        int m = -j - 1;
        xs.push_back(origin_ - (m + 0.5) * h_);
        idx.push_back(m);
        flip.push_back(true);
      } else if (j >= n_) {
        if (outer_ != Closure::parity) throw std::logic_error("stencil overflow");
        int m = 2 * n_ - 1 - j;
        xs.push_back(origin_ + (j + 0.5) * h_);
        idx.push_back(m);
        flip.push_back(true);
      } else {
        xs.push_back(node(j));
        idx.push_back(j);
        flip.push_back(false);
      }
    };
    bool near_outer = i >= n_ - 2 && outer_ != Closure::parity;
    if (!near_outer) {
      for (int j = i - 2; j <= i + 2; ++j) push(j);
    } else if (outer_ == Closure::one_sided) {
      for (int j = n_ - 6; j < n_; ++j) push(j);
    } else {
      for (int j = n_ - 5; j < n_; ++j) push(j);
      xs.push_back(outer_edge());
      has_boundary = true;
      bx = outer_edge();
    }
    (void)bx;
    auto w = fd_weights(node(i), xs, 2);
    RadialRow row;
    int m = int(idx.size());
    for (int k = 0; k < m; ++k) row.terms.push_back({idx[k], flip[k], w[1][k], w[2][k]});
    if (has_boundary) {
      row.bd1 = w[1][m];
      row.bd2 = w[2][m];
    }
    return row;
  }

  int n_;
  double h_, origin_;
  Closure inner_, outer_;
  std::vector<RadialRow> rows_;
};

}  // namespace edgeflat
