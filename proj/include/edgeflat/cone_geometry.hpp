#pragma once
// Cone disk grids in the straightened frame, the model cone metric, its
// Laplacian, and discrete Hoelder estimators.
//
// Nodes sit at xi = r e^{i theta} with cell-centred radii r_i = (i+1/2) h,
// so the cone point is never sampled. An optional flat tangential direction
// z = x + i y is carried as a periodic T x T grid. Storage is [r][theta][x][y].

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "edgeflat/common.hpp"
#include "edgeflat/fft.hpp"
#include "edgeflat/stencil.hpp"

namespace edgeflat {

struct ConeParams {
  double beta = 1.0 / 3.0;
  double alpha = 0.5;
  double lambda = 0.05;
  double epsilon = -1;  // negative means beta/4
  double L = 1.0;
  double kappa = 1.0;

  double eps() const { return epsilon > 0 ? epsilon : beta / 4; }
  void validate() const {
    if (!(beta > 0 && beta < 0.5)) throw ValidationError("beta must lie in (0, 1/2)");
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must lie in (0, 1)");
    if (!(lambda >= 0)) throw ValidationError("lambda must be nonnegative");
    if (!(L > 0) || !(kappa > 0)) throw ValidationError("L and kappa must be positive");
  }
  bool appendix_hypothesis() const { return alpha * beta < 1 - 2 * beta; }
};

enum class Frame { zeta, xi, psi, edge };

inline std::string frame_name(Frame f) {
  switch (f) {
    case Frame::zeta: return "zeta";
    case Frame::xi: return "xi";
    case Frame::psi: return "psi";
    case Frame::edge: return "edge";
  }
  return "?";
}

struct ConeGrid {
  double beta = 1.0 / 3.0;
  int n_r = 32;
  double radius = 1.0;
  int n_theta = 16;
  int n_tan = 0;  // 0: disk only; otherwise T x T periodic tangential grid
  double period = 2 * pi;

  void validate() const {
    if (n_r < 8) throw ValidationError("need at least 8 radial nodes");
    if (n_theta < 4 || n_theta % 2) throw ValidationError("angular count must be even and >= 4");
    if (n_tan < 0 || n_tan == 1 || n_tan % 2) throw ValidationError("tangential count must be 0 or even");
    if (!(radius > 0) || !(period > 0)) throw ValidationError("bad grid extent");
    if (!(beta > 0 && beta < 1)) throw ValidationError("bad cone angle");
  }
  double h() const { return radius / n_r; }
  double r(int i) const { return (i + 0.5) * h(); }
  double theta(int j) const { return 2 * pi * j / n_theta; }
  double tan(int a) const { return period * a / std::max(n_tan, 1); }
  bool tangential() const { return n_tan > 0; }
  int tan_count() const { return n_tan ? n_tan * n_tan : 1; }
  int slice() const { return n_theta * tan_count(); }
  std::size_t size() const { return std::size_t(n_r) * slice(); }
  std::size_t index(int i, int j, int a = 0, int b = 0) const {
    return (std::size_t(i) * n_theta + j) * tan_count() + (n_tan ? a * n_tan + b : 0);
  }
  // Quadrature weight for a node on radius index i (cone area beta r dr dtheta).
  double weight(int i) const {
    double w = beta * r(i) * h() * (2 * pi / n_theta);
    if (n_tan) w *= (period / n_tan) * (period / n_tan);
    return w;
  }
  cplx xi(int i, int j) const { return std::polar(r(i), theta(j)); }

  ConeGrid refined() const {
    ConeGrid g = *this;
    g.n_r *= 2;
    g.n_theta *= 2;
    if (g.n_tan) g.n_tan *= 2;
    return g;
  }
};

// Sampled values with a frame tag. Real fields keep zero imaginary parts.
struct Field {
  ConeGrid grid;
  Frame frame = Frame::xi;
  bool real = true;
  std::vector<cplx> values;

  Field() = default;
  Field(ConeGrid g, Frame f, bool is_real) : grid(g), frame(f), real(is_real), values(g.size()) {}

  double max_abs() const {
    double m = 0;
    for (auto& v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

template <class Fn>
Field sample(const ConeGrid& g, Fn f, bool is_real = true, Frame frame = Frame::xi) {
  Field out(g, frame, is_real);
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j)
      for (int a = 0; a < std::max(g.n_tan, 1); ++a)
        for (int b = 0; b < std::max(g.n_tan, 1); ++b)
          out.values[g.index(i, j, a, b)] = f(g.r(i), g.theta(j), g.tan(a), g.tan(b));
  return out;
}

inline cplx to_cone_coords(cplx zeta, double beta) {
  double m = std::abs(zeta);
  if (m == 0) return 0;
  return std::pow(m, beta - 1) * zeta;
}

inline cplx from_cone_coords(cplx xi, double beta) {
  double m = std::abs(xi);
  if (m == 0) return 0;
  return std::pow(m, 1 / beta - 1) * xi;
}

// Diagonal of the model metric in zeta-frame coordinates: tangential ones,
// then beta^2 |zeta|^{2 beta - 2}.
inline std::vector<double> model_metric(cplx zeta, double beta, int n) {
  if (std::abs(zeta) == 0) throw SingularPointError("model metric requested at the cone point");
  std::vector<double> d(n, 1.0);
  d[n - 1] = beta * beta * std::pow(std::abs(zeta), 2 * beta - 2);
  return d;
}

// Differential operators on a fixed grid.
class ConeOps {
 public:
  explicit ConeOps(const ConeGrid& g)
      : g_(g),
        open_(g.n_r, g.h(), Closure::parity, Closure::one_sided),
        dir_(g.n_r, g.h(), Closure::parity, Closure::dirichlet) {
    g.validate();
    int M = g.n_theta, T = std::max(g.n_tan, 1);
    mth_.resize(M);
    for (int j = 0; j < M; ++j) mth_[j] = wavenumber(j, M);
    kt_.resize(T);
    for (int a = 0; a < T; ++a) kt_[a] = g.n_tan ? 2 * pi / g.period * wavenumber(a, T) : 0.0;
    nyq_m_ = M / 2;
    nyq_t_ = g.n_tan ? T / 2 : -1;
  }

  const ConeGrid& grid() const { return g_; }
  const RadialStencil& open_stencil() const { return open_; }
  const RadialStencil& dirichlet_stencil() const { return dir_; }

  std::vector<int> fft_dims() const {
    if (g_.n_tan) return {g_.n_theta, g_.n_tan, g_.n_tan};
    return {g_.n_theta};
  }
  void forward(std::span<cplx> v) const { fft_plan(fft_dims(), g_.n_r).forward(v); }
  void backward(std::span<cplx> v) const { fft_plan(fft_dims(), g_.n_r).backward(v); }

  int mode(int j) const { return mth_[j]; }
  double kx(int a) const { return kt_[a]; }
  bool nyq_theta(int j) const { return j == nyq_m_; }
  bool nyq_tan(int a) const { return a == nyq_t_; }

  // Multiply each Fourier mode (per radius) by sym(j, a, b).
  template <class Sym>
  std::vector<cplx> spectral(std::span<const cplx> v, Sym sym) const {
    std::vector<cplx> w(v.begin(), v.end());
    forward(w);
    int M = g_.n_theta, T = std::max(g_.n_tan, 1);
    for (int i = 0; i < g_.n_r; ++i)
      for (int j = 0; j < M; ++j)
        for (int a = 0; a < T; ++a)
          for (int b = 0; b < T; ++b) w[g_.index(i, j, a, b)] *= sym(j, a, b);
    backward(w);
    return w;
  }

  std::vector<cplx> d_theta(std::span<const cplx> v) const {
    return spectral(v, [&](int j, int, int) { return nyq_theta(j) ? cplx(0) : I * double(mth_[j]); });
  }
  std::vector<cplx> d_theta2(std::span<const cplx> v) const {
    return spectral(v, [&](int j, int, int) { return cplx(-double(mth_[j]) * mth_[j]); });
  }
  // d/dz = (d/dx - i d/dy)/2 on the tangential torus.
  std::vector<cplx> d_z(std::span<const cplx> v) const {
    return spectral(v, [&](int, int a, int b) {
      cplx kx = nyq_tan(a) ? 0.0 : kt_[a], ky = nyq_tan(b) ? 0.0 : kt_[b];
      return 0.5 * (I * kx + ky);
    });
  }
  std::vector<cplx> d_zbar(std::span<const cplx> v) const {
    return spectral(v, [&](int, int a, int b) {
      cplx kx = nyq_tan(a) ? 0.0 : kt_[a], ky = nyq_tan(b) ? 0.0 : kt_[b];
      return 0.5 * (I * kx - ky);
    });
  }
  std::vector<cplx> d_zzbar(std::span<const cplx> v) const {
    return spectral(v, [&](int, int a, int b) { return cplx(-0.25 * (kt_[a] * kt_[a] + kt_[b] * kt_[b])); });
  }
  std::vector<cplx> d_zz(std::span<const cplx> v) const {
    return spectral(v, [&](int, int a, int b) {
      cplx kx = nyq_tan(a) ? 0.0 : kt_[a], ky = nyq_tan(b) ? 0.0 : kt_[b];
      cplx s = 0.5 * (I * kx + ky);
      if (nyq_tan(a) || nyq_tan(b)) return cplx(0);
      return s * s;
    });
  }

  // Radial derivatives; `boundary` (one value per theta/tangential slot at
  // r = R) switches the outer closure to the boundary-value stencil.
  std::vector<cplx> d_r(std::span<const cplx> v, std::span<const cplx> boundary = {}) const {
    return radial(v, boundary, 1);
  }
  std::vector<cplx> d_rr(std::span<const cplx> v, std::span<const cplx> boundary = {}) const {
    return radial(v, boundary, 2);
  }

  std::vector<cplx> d_xi(std::span<const cplx> v) const { return d_xi_impl(v, -1); }
  std::vector<cplx> d_xibar(std::span<const cplx> v) const { return d_xi_impl(v, +1); }

  // Transverse part (1/4)(v_rr + v_r/r + v_thth/(beta^2 r^2)).
  std::vector<cplx> transverse_laplacian(std::span<const cplx> v,
                                         std::span<const cplx> boundary = {}) const {
    auto vr = d_r(v, boundary), vrr = d_rr(v, boundary), vtt = d_theta2(v);
    std::vector<cplx> out(v.size());
    int S = g_.slice();
    double b2 = g_.beta * g_.beta;
    for (int i = 0; i < g_.n_r; ++i) {
      double r = g_.r(i);
      for (int s = 0; s < S; ++s) {
        std::size_t k = std::size_t(i) * S + s;
        out[k] = 0.25 * (vrr[k] + vr[k] / r + vtt[k] / (b2 * r * r));
      }
    }
    return out;
  }

  std::vector<cplx> laplacian(std::span<const cplx> v, std::span<const cplx> boundary = {}) const {
    auto out = transverse_laplacian(v, boundary);
    if (g_.n_tan) {
      auto t = d_zzbar(v);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += t[k];
    }
    return out;
  }

  // Fraction of spectral energy in the top quarter of |m| (and of |k|).
  double trailing_energy(std::span<const cplx> v) const {
    std::vector<cplx> w(v.begin(), v.end());
    forward(w);
    int M = g_.n_theta, T = std::max(g_.n_tan, 1);
    double total = 0, tail = 0;
    for (int i = 0; i < g_.n_r; ++i)
      for (int j = 0; j < M; ++j)
        for (int a = 0; a < T; ++a)
          for (int b = 0; b < T; ++b) {
            double e = std::norm(w[g_.index(i, j, a, b)]);
            total += e;
            bool hi = std::abs(mth_[j]) * 8 >= 3 * M;
            if (g_.n_tan)
              hi = hi || std::abs(wavenumber(a, T)) * 8 >= 3 * T || std::abs(wavenumber(b, T)) * 8 >= 3 * T;
            if (hi) tail += e;
          }
    return total > 0 ? tail / total : 0.0;
  }

  void require_resolved(std::span<const cplx> v, double tol = 1e-8) const {
    double t = trailing_energy(v);
    if (t >= tol)
      throw ResolutionError("spectral tail fraction " + std::to_string(t) + " exceeds tolerance");
  }

 private:
  std::vector<cplx> radial(std::span<const cplx> v, std::span<const cplx> boundary, int order) const {
    const RadialStencil& st = boundary.empty() ? open_ : dir_;
    int S = g_.slice(), T2 = g_.tan_count(), M = g_.n_theta;
    std::vector<cplx> out(v.size(), 0.0);
    for (int i = 0; i < g_.n_r; ++i) {
      const auto& row = st.row(i);
      for (int j = 0; j < M; ++j) {
        int jf = (j + M / 2) % M;
        for (int t = 0; t < T2; ++t) {
          cplx acc = 0;
          for (const auto& term : row.terms) {
            double w = order == 1 ? term.d1 : term.d2;
            acc += w * v[(std::size_t(term.node) * M + (term.flip ? jf : j)) * T2 + t];
          }
          if (!boundary.empty()) acc += (order == 1 ? row.bd1 : row.bd2) * boundary[j * T2 + t];
          out[std::size_t(i) * S + j * T2 + t] = acc;
        }
      }
    }
    return out;
  }

  std::vector<cplx> d_xi_impl(std::span<const cplx> v, int sign) const {
    auto vr = d_r(v), vt = d_theta(v);
    std::vector<cplx> out(v.size());
    int S = g_.slice(), T2 = g_.tan_count();
    for (int i = 0; i < g_.n_r; ++i) {
      double r = g_.r(i);
      for (int j = 0; j < g_.n_theta; ++j) {
        cplx ph = std::polar(0.5, sign * g_.theta(j));
        for (int t = 0; t < T2; ++t) {
          std::size_t k = std::size_t(i) * S + j * T2 + t;
          out[k] = ph * (vr[k] + double(sign) * I * vt[k] / r);
        }
      }
    }
    return out;
  }

  ConeGrid g_;
  RadialStencil open_, dir_;
  std::vector<int> mth_;
  std::vector<double> kt_;
  int nyq_m_, nyq_t_;
};

inline Field model_laplacian(const Field& v) {
  ConeOps ops(v.grid);
  ops.require_resolved(v.values);
  Field out(v.grid, Frame::xi, v.real);
  out.values = ops.laplacian(v.values);
  if (v.real)
    for (auto& x : out.values) x = x.real();
  return out;
}

// Dyadic annulus index j with R 2^{-j-1} < r <= R 2^{-j}.
inline int annulus_of(double r, double R) {
  return int(std::floor(std::log2(R / r)));
}

// Deterministic pair sample for Hoelder quotients on a grid, restricted to
// r <= window. Pairs inside one tangential slice carry 1/d^alpha; tangential
// pairs are stored as offsets along the x, y and diagonal directions.
struct HolderSample {
  double alpha = 0.5;
  double window = 1.0;
  struct Pair { int p, q; double inv; };
  std::vector<Pair> slice_pairs;  // slice-local index i * M + j
  struct Offset { int da, db; double inv; };
  std::vector<Offset> tan_offsets;
  int window_nodes = 0;  // radial nodes inside the window
};

inline HolderSample make_holder_sample(const ConeGrid& g, double alpha,
                                       double window = std::numeric_limits<double>::infinity()) {
  HolderSample s;
  s.alpha = alpha;
  s.window = window;
  int M = g.n_theta;
  int nr = 0;
  while (nr < g.n_r && g.r(nr) <= window) ++nr;
  s.window_nodes = nr;
  auto dist = [&](int i, int j, int i2, int j2) {
    double r1 = g.r(i), r2 = g.r(i2);
    double d2 = r1 * r1 + r2 * r2 - 2 * r1 * r2 * std::cos(g.theta(j) - g.theta(j2));
    return std::sqrt(std::max(d2, 0.0));
  };
  auto add = [&](int i, int j, int i2, int j2) {
    double d = dist(i, j, i2, j2);
    if (d <= 0) return;
    s.slice_pairs.push_back({i * M + j, i2 * M + j2, std::pow(d, -alpha)});
  };
  // all pairs within each dyadic annulus
  std::vector<int> ann(nr);
  for (int i = 0; i < nr; ++i) ann[i] = annulus_of(g.r(i), g.radius);
  for (int i = 0; i < nr; ++i)
    for (int i2 = i; i2 < nr; ++i2) {
      if (ann[i2] != ann[i]) continue;
      for (int j = 0; j < M; ++j)
        for (int j2 = (i2 == i ? j + 1 : 0); j2 < M; ++j2) add(i, j, i2, j2);
    }
  // cross-annulus pairs along each ray and across the cone point
  for (int j = 0; j < M; ++j) {
    int jo = (j + M / 2) % M;
    for (int i = 0; i < nr; ++i)
      for (int i2 = 0; i2 < nr; ++i2) {
        if (i2 > i && ann[i2] != ann[i]) add(i, j, i2, j);
        if (j < M / 2) add(i, j, i2, jo);
      }
  }
  if (g.n_tan) {
    int T = g.n_tan;
    double dx = g.period / T;
    auto per = [&](int d) { d = ((d % T) + T) % T; return std::min(d, T - d) * dx; };
    for (int d = 1; d < T; ++d) {
      double a = per(d);
      s.tan_offsets.push_back({d, 0, std::pow(a, -alpha)});
      s.tan_offsets.push_back({0, d, std::pow(a, -alpha)});
      s.tan_offsets.push_back({d, d, std::pow(std::sqrt(2.0) * a, -alpha)});
    }
  }
  return s;
}

inline double holder_beta_seminorm(const ConeGrid& g, std::span<const cplx> f, const HolderSample& s) {
  int M = g.n_theta, T = std::max(g.n_tan, 1), T2 = g.tan_count();
  double best = 0;
  for (const auto& p : s.slice_pairs) {
    const cplx* a = f.data() + std::size_t(p.p) * T2;
    const cplx* b = f.data() + std::size_t(p.q) * T2;
    double d2 = 0;
    for (int t = 0; t < T2; ++t) d2 = std::max(d2, std::norm(a[t] - b[t]));
    best = std::max(best, std::sqrt(d2) * p.inv);
  }
  if (g.n_tan) {
    for (int i = 0; i < s.window_nodes; ++i)
      for (int j = 0; j < M; ++j)
        for (int a = 0; a < T; ++a)
          for (int b = 0; b < T; ++b) {
            cplx v = f[g.index(i, j, a, b)];
            for (const auto& o : s.tan_offsets) {
              cplx w = f[g.index(i, j, (a + o.da) % T, (b + o.db) % T)];
              best = std::max(best, std::abs(v - w) * o.inv);
            }
          }
  }
  return best;
}

inline double holder_beta_seminorm(const Field& f, double alpha) {
  return holder_beta_seminorm(f.grid, f.values, make_holder_sample(f.grid, alpha));
}

// Per Fourier mode, linear extrapolation to r = 0 of the mode coefficient
// from its means over the two innermost non-empty dyadic annuli. Returns the
// sum of moduli of the extrapolated coefficients (a bound on the sup of the
// extrapolated limit) and fills `per_mode` if given.
inline double pole_extrapolation(const ConeGrid& g, std::span<const cplx> f,
                                 std::vector<cplx>* per_mode = nullptr) {
  ConeOps ops(g);
  std::vector<cplx> w(f.begin(), f.end());
  ops.forward(w);
  int S = g.slice();
  double norm = 1.0 / S;
  std::vector<int> inner;  // radial indices of the first two annuli
  int a0 = annulus_of(g.r(0), g.radius);
  int a1 = -1;
  std::vector<int> i0, i1;
  for (int i = 0; i < g.n_r; ++i) {
    int a = annulus_of(g.r(i), g.radius);
    if (a == a0) i0.push_back(i);
    else if (a1 < 0 || a == a1) { a1 = a; i1.push_back(i); }
    else break;
  }
  if (i1.empty()) throw ResolutionError("fewer than two annuli");
  auto mean_r = [&](const std::vector<int>& ids) {
    double s = 0;
    for (int i : ids) s += g.r(i);
    return s / ids.size();
  };
  double r0 = mean_r(i0), r1 = mean_r(i1);
  double total = 0;
  if (per_mode) per_mode->assign(S, 0.0);
  for (int s = 0; s < S; ++s) {
    cplx c0 = 0, c1 = 0;
    for (int i : i0) c0 += w[std::size_t(i) * S + s];
    for (int i : i1) c1 += w[std::size_t(i) * S + s];
    c0 *= norm / double(i0.size());
    c1 *= norm / double(i1.size());
    cplx lim = c0 - r0 * (c1 - c0) / (r1 - r0);
    if (per_mode) (*per_mode)[s] = lim;
    total += std::abs(lim);
  }
  return total;
}

inline bool is_vanishing_class(const Field& f, double rel_tol = 1e-6) {
  double sup = f.max_abs();
  if (sup == 0) return true;
  return pole_extrapolation(f.grid, f.values) < rel_tol * sup;
}

}  // namespace edgeflat
