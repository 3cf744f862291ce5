#pragma once
// The hexagonal flat torus C / (Z + tau Z), tau = exp(i pi/3), as a Z_3
// branched cover of the Riemann sphere through x = wp'(w) followed by a
// Moebius map. Fields on the torus are periodic and resolved spectrally.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "edgeflat/common.hpp"
#include "edgeflat/fft.hpp"
#include "edgeflat/jet.hpp"

namespace edgeflat {

inline const cplx hex_tau = std::polar(1.0, pi / 3);

// N x N nodes w = (i + s)/N + tau (j + s)/N with offset s = 1/3, so that
// for N divisible by 3 no node sits on a fixed point of w -> exp(2 pi i/3) w.
struct HexTorus {
  int n = 48;
  double offset = 1.0 / 3.0;

  void validate() const {
    if (n < 6 || n % 6) throw ValidationError("cover grid size must be a positive multiple of 6");
  }
  std::size_t size() const { return std::size_t(n) * n; }
  std::size_t index(int i, int j) const { return std::size_t(i) * n + j; }
  double a(int i) const { return (i + offset) / n; }
  cplx node(int i, int j) const { return a(i) + hex_tau * a(j); }
  cplx node(std::size_t k) const { return node(int(k / n), int(k % n)); }
  // Euclidean area of one cell; the torus has area Im tau.
  double cell_area() const { return hex_tau.imag() / (double(n) * n); }
};

// Lattice coordinates (a, b) of w = a + b tau.
inline std::array<double, 2> lattice_coords(cplx w) {
  double b = w.imag() / hex_tau.imag();
  return {w.real() - b * hex_tau.real(), b};
}

// Reduce w into the cell a, b in [-1/2, 1/2).
inline cplx reduce_to_cell(cplx w) {
  auto [a, b] = lattice_coords(w);
  a -= std::floor(a + 0.5);
  b -= std::floor(b + 0.5);
  return a + b * hex_tau;
}

// Weierstrass functions of the lattice Z + tau Z from the cosecant series
//   wp(u) = -pi^2/3 + sum_n pi^2 csc^2(pi(u + n tau)) - sum_{n != 0} pi^2 csc^2(pi n tau).
class Weierstrass {
 public:
  explicit Weierstrass(int terms = 8) : terms_(terms) {
    constant_ = -pi * pi / 3;
    for (int k = -terms_; k <= terms_; ++k) {
      if (!k) continue;
      cplx s = std::sin(pi * double(k) * hex_tau);
      constant_ -= pi * pi / (s * s);
    }
    cplx e1 = p(0.5), e2 = p(hex_tau / 2.0), e3 = p((1.0 + hex_tau) / 2.0);
    g2_ = -4.0 * (e1 * e2 + e1 * e3 + e2 * e3);
    g3_ = 4.0 * e1 * e2 * e3;
  }

  cplx p(cplx u) const {
    u = reduce_to_cell(u);
    if (std::abs(u) < 1e-14) throw SingularPointError("wp evaluated at a lattice point");
    cplx s = constant_;
    for (int k = -terms_; k <= terms_; ++k) {
      cplx c = std::sin(pi * (u + double(k) * hex_tau));
      s += pi * pi / (c * c);
    }
    return s;
  }

  cplx dp(cplx u) const {
    u = reduce_to_cell(u);
    if (std::abs(u) < 1e-14) throw SingularPointError("wp' evaluated at a lattice point");
    cplx s = 0;
    for (int k = -terms_; k <= terms_; ++k) {
      cplx x = pi * (u + double(k) * hex_tau);
      cplx sn = std::sin(x);
      s += std::cos(x) / (sn * sn * sn);
    }
    return -2 * pi * pi * pi * s;
  }

  cplx g2() const { return g2_; }
  cplx g3() const { return g3_; }

  // Taylor coefficients of wp' at u, orders 0..K, from wp'' = 6 wp^2 - g2/2.
  template <int K>
  std::array<cplx, K + 1> dp_taylor(cplx u) const {
    std::array<cplx, K + 3> c{};
    c[0] = p(u);
    c[1] = dp(u);
    for (int k = 0; k + 2 < K + 3; ++k) {
      cplx s = 0;
      for (int i = 0; i <= k; ++i) s += c[i] * c[k - i];
      s *= 6.0;
      if (k == 0) s -= g2_ / 2.0;
      c[k + 2] = s / double((k + 2) * (k + 1));
    }
    std::array<cplx, K + 1> out{};
    for (int k = 0; k <= K; ++k) out[k] = double(k + 1) * c[k + 1];
    return out;
  }

 private:
  int terms_;
  cplx constant_ = 0, g2_ = 0, g3_ = 0;
};

// z = pi(w) = M(wp'(w)) with M(x) = (p1 x + B)/(x + D) sending the critical
// values infinity, v, -v of wp' (v = wp'((1+tau)/3)) to the marked points.
class CoverMap {
 public:
  explicit CoverMap(std::array<cplx, 3> marked, int terms = 8) : wp_(terms), marked_(marked) {
    v_ = wp_.dp((1.0 + hex_tau) / 3.0);
    cplx p1 = marked[0], p2 = marked[1], p3 = marked[2];
    if (std::abs(p2 - p3) < 1e-12 || std::abs(p1 - p2) < 1e-12 || std::abs(p1 - p3) < 1e-12)
      throw ValidationError("marked points must be distinct");
    d_ = (p2 + p3 - 2.0 * p1) * v_ / (p3 - p2);
    b_ = (p2 - p1) * v_ + p2 * d_;
  }

  const Weierstrass& weierstrass() const { return wp_; }
  const std::array<cplx, 3>& marked() const { return marked_; }
  // Branch points on the torus over marked[0], marked[1], marked[2].
  std::array<cplx, 3> branch_points() const {
    return {cplx(0), (1.0 + hex_tau) / 3.0, 2.0 * (1.0 + hex_tau) / 3.0};
  }
  // Which marked point a branch point maps to (the sign of v decides 1 vs 2).
  int marked_index_of_branch(int b) const {
    if (b == 0) return 0;
    cplx x = wp_.dp(branch_points()[b]);
    return std::abs(x - v_) < std::abs(x + v_) ? 1 : 2;
  }

  cplx moebius(cplx x) const { return (marked_[0] * x + b_) / (x + d_); }
  cplx operator()(cplx w) const { return moebius(wp_.dp(w)); }

  // Holomorphic jet of pi at w in slot 0 of a (w, wbar) jet.
  template <int K>
  Jet<2, K> jet(cplx w) const {
    auto t = wp_.template dp_taylor<K>(w);
    auto x = Jet<2, K>::variable(0, w).compose(t);
    return (marked_[0] * x + b_) / (x + d_);
  }

 private:
  Weierstrass wp_;
  std::array<cplx, 3> marked_;
  cplx v_, b_, d_;
};

// Spectral calculus on HexTorus fields. Mode (l, k) is exp(2 pi i (l a + k b)).
class TorusOps {
 public:
  explicit TorusOps(const HexTorus& g) : g_(g) {
    g.validate();
  }

  const HexTorus& grid() const { return g_; }
  void forward(std::span<cplx> v) const { fft_plan({g_.n, g_.n}, 1).forward(v); }
  void backward(std::span<cplx> v) const { fft_plan({g_.n, g_.n}, 1).backward(v); }

  // Wavevector K of slot (i, j): K . 1 = 2 pi l and K . tau = 2 pi k.
  std::array<double, 2> wavevector(int i, int j) const {
    double l = wavenumber(i, g_.n), k = wavenumber(j, g_.n);
    double kx = 2 * pi * l;
    double ky = 2 * pi * (k - l * hex_tau.real()) / hex_tau.imag();
    return {kx, ky};
  }
  bool nyquist_slot(int i, int j) const { return nyquist(i, g_.n) || nyquist(j, g_.n); }

  template <class Sym>
  std::vector<cplx> spectral(std::span<const cplx> v, Sym sym) const {
    std::vector<cplx> w(v.begin(), v.end());
    forward(w);
    for (int i = 0; i < g_.n; ++i)
      for (int j = 0; j < g_.n; ++j) w[g_.index(i, j)] *= sym(i, j);
    backward(w);
    return w;
  }

  // d/dw = (d/dx - i d/dy)/2.
  std::vector<cplx> d_w(std::span<const cplx> v) const {
    return spectral(v, [&](int i, int j) {
      if (nyquist_slot(i, j)) return cplx(0);
      auto [kx, ky] = wavevector(i, j);
      return 0.5 * (I * kx + ky);
    });
  }
  std::vector<cplx> d_wbar(std::span<const cplx> v) const {
    return spectral(v, [&](int i, int j) {
      if (nyquist_slot(i, j)) return cplx(0);
      auto [kx, ky] = wavevector(i, j);
      return 0.5 * (I * kx - ky);
    });
  }
  // At Nyquist slots the wavevector is ambiguous (l and -l alias); the symbol
  // averages the representatives so that it stays conjugate-symmetric and
  // real data keeps real derivatives.
  double ddbar_symbol(int i, int j) const {
    double l = wavenumber(i, g_.n), k = wavenumber(j, g_.n);
    bool nl = nyquist(i, g_.n), nk = nyquist(j, g_.n);
    double s = 0;
    int count = 0;
    for (double ls : {l, nl ? -l : l})
      for (double ks : {k, nk ? -k : k}) {
        double kx = 2 * pi * ls;
        double ky = 2 * pi * (ks - ls * hex_tau.real()) / hex_tau.imag();
        s += kx * kx + ky * ky;
        ++count;
      }
    return -0.25 * s / count;
  }
  // d^2/dw dwbar = (1/4)(d_x^2 + d_y^2).
  std::vector<cplx> ddbar(std::span<const cplx> v) const {
    return spectral(v, [&](int i, int j) { return cplx(ddbar_symbol(i, j)); });
  }
  // Mean-zero solution of ddbar u = f; f must have zero mean up to `tol`
  // relative to max(sup |f|, scale).
  std::vector<cplx> solve_ddbar(std::span<const cplx> f, double scale = 0, double tol = 1e-9) const {
    std::vector<cplx> w(f.begin(), f.end());
    forward(w);
    double sup = scale;
    for (auto x : f) sup = std::max(sup, std::abs(x));
    double mean = std::abs(w[0]) / double(g_.size());
    if (mean > tol * std::max(sup, 1e-300))
      throw SolverError("ddbar equation not solvable: right-hand side mean " + std::to_string(mean));
    for (int i = 0; i < g_.n; ++i)
      for (int j = 0; j < g_.n; ++j) {
        double s = ddbar_symbol(i, j);
        w[g_.index(i, j)] = (i == 0 && j == 0) ? cplx(0) : w[g_.index(i, j)] / s;
      }
    backward(w);
    return w;
  }

  // Spectral (trigonometric) interpolation at an arbitrary point.
  std::vector<cplx> coefficients(std::span<const cplx> v) const {
    std::vector<cplx> w(v.begin(), v.end());
    forward(w);
    for (auto& x : w) x /= double(g_.size());
    return w;
  }
  cplx interpolate(std::span<const cplx> coeff, cplx w) const {
    auto [a, b] = lattice_coords(w);
    a -= g_.offset / g_.n;
    b -= g_.offset / g_.n;
    int n = g_.n;
    std::vector<cplx> ea(n), eb(n);
    for (int i = 0; i < n; ++i) {
      double l = wavenumber(i, n);
      ea[i] = nyquist(i, n) ? cplx(std::cos(2 * pi * l * a)) : std::polar(1.0, 2 * pi * l * a);
      eb[i] = nyquist(i, n) ? cplx(std::cos(2 * pi * l * b)) : std::polar(1.0, 2 * pi * l * b);
    }
    cplx s = 0;
    for (int i = 0; i < n; ++i) {
      cplx row = 0;
      for (int j = 0; j < n; ++j) row += coeff[g_.index(i, j)] * eb[j];
      s += row * ea[i];
    }
    return s;
  }

  // Fraction of spectral energy in slots with max(|l|, |k|) > 3n/8.
  double trailing_energy(std::span<const cplx> v) const {
    std::vector<cplx> w(v.begin(), v.end());
    forward(w);
    double tot = 0, tail = 0;
    for (int i = 0; i < g_.n; ++i)
      for (int j = 0; j < g_.n; ++j) {
        double e = std::norm(w[g_.index(i, j)]);
        tot += e;
        if (std::max(std::abs(wavenumber(i, g_.n)), std::abs(wavenumber(j, g_.n))) > 3 * g_.n / 8)
          tail += e;
      }
    return tot > 0 ? tail / tot : 0.0;
  }

 private:
  HexTorus g_;
};

}  // namespace edgeflat
