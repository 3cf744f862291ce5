#pragma once
// Mode-by-mode solver for the cone Laplacian on the disk (times an optional
// periodic tangential torus) with Dirichlet data at r = R, plus the vanishing
// and Schauder probes built on it.

#include <functional>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "edgeflat/banded.hpp"
#include "edgeflat/cone_geometry.hpp"
#include "edgeflat/decay_fit.hpp"

namespace edgeflat {

// Radial operator of one Fourier mode (m, k):
//   p(r) (1/4)(v'' + v'/r - m^2 v/(beta^2 r^2)) - q(r) |k|^2 v / 4
// with the parity ghost sign (-1)^m at the pole and the boundary-value
// closure at r = R.
class ModeSolver {
 public:
  ModeSolver(const ConeGrid& g, std::vector<double> p = {}, std::vector<double> q = {})
      : g_(g), ops_(g), p_(std::move(p)), q_(std::move(q)) {
    if (p_.empty()) p_.assign(g.n_r, 1.0);
    if (q_.empty()) q_.assign(g.n_r, 1.0);
  }

  const ConeGrid& grid() const { return g_; }
  const ConeOps& ops() const { return ops_; }

  // f and the result are physical samples; boundary holds values at r = R per
  // (theta, tangential) slot, or is empty for zero data.
  std::vector<cplx> solve(std::span<const cplx> f, std::span<const cplx> boundary = {}) const {
    int M = g_.n_theta, T = std::max(g_.n_tan, 1), S = g_.slice(), N = g_.n_r;
    std::vector<cplx> w(f.begin(), f.end());
    ops_.forward(w);
    std::vector<cplx> bh;
    if (!boundary.empty()) {
      bh.assign(boundary.begin(), boundary.end());
      fft_plan(ops_.fft_dims(), 1).forward(bh);
    }
    const auto& st = ops_.dirichlet_stencil();
    std::vector<double> rhs(2 * N);
    for (int j = 0; j < M; ++j)
      for (int a = 0; a < T; ++a)
        for (int b = 0; b < T; ++b) {
          int s = (j * T + a) * (g_.n_tan ? T : 1) + (g_.n_tan ? b : 0);
          if (!g_.n_tan && (a || b)) continue;
          const BandedLU& lu = factor(j, a, b);
          for (int i = 0; i < N; ++i) {
            cplx v = w[std::size_t(i) * S + s];
            rhs[i] = v.real();
            rhs[N + i] = v.imag();
          }
          if (!bh.empty()) {
            for (int i = N - 2; i < N; ++i) {
              const auto& row = st.row(i);
              double c = p_[i] * 0.25 * (row.bd2 + row.bd1 / g_.r(i));
              rhs[i] -= c * bh[s].real();
              rhs[N + i] -= c * bh[s].imag();
            }
          }
          lu.solve(rhs, 2);
          for (int i = 0; i < N; ++i) w[std::size_t(i) * S + s] = cplx(rhs[i], rhs[N + i]);
        }
    ops_.backward(w);
    return w;
  }

 private:
  const BandedLU& factor(int j, int a, int b) const {
    int m = std::abs(ops_.mode(j));
    int ka = std::abs(wavenumber(a, std::max(g_.n_tan, 1)));
    int kb = std::abs(wavenumber(b, std::max(g_.n_tan, 1)));
    auto key = std::make_tuple(m, std::min(ka, kb), std::max(ka, kb));
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    double k2 = ops_.kx(a) * ops_.kx(a) + ops_.kx(b) * ops_.kx(b);
    if (!g_.n_tan) k2 = 0;
    const auto& st = ops_.dirichlet_stencil();
    int N = g_.n_r;
    BandedLU lu(N, st.lower_band(), st.upper_band());
    double sign = (m % 2) ? -1.0 : 1.0;
    double b2 = g_.beta * g_.beta;
    for (int i = 0; i < N; ++i) {
      double r = g_.r(i);
      for (const auto& t : st.row(i).terms)
        lu.add(i, t.node, p_[i] * 0.25 * (t.d2 + t.d1 / r) * (t.flip ? sign : 1.0));
      lu.add(i, i, -p_[i] * 0.25 * m * m / (b2 * r * r) - q_[i] * 0.25 * k2);
    }
    lu.factor();
    return cache_.emplace(key, std::move(lu)).first->second;
  }

  ConeGrid g_;
  ConeOps ops_;
  std::vector<double> p_, q_;
  mutable std::map<std::tuple<int, int, int>, BandedLU> cache_;
};

struct PoissonResult {
  Field v;
  double residual = 0;  // max |Delta v - f| with the solver's own discretization
};

inline PoissonResult solve_model_poisson(const Field& f, std::span<const cplx> boundary = {}) {
  ModeSolver solver(f.grid);
  solver.ops().require_resolved(f.values);
  PoissonResult out;
  out.v = Field(f.grid, Frame::xi, f.real);
  out.v.values = solver.solve(f.values, boundary);
  if (f.real)
    for (auto& x : out.v.values) x = x.real();
  std::vector<cplx> zero;
  if (boundary.empty()) {
    zero.assign(f.grid.slice(), 0.0);
    boundary = zero;
  }
  auto lap = solver.ops().laplacian(out.v.values, boundary);
  for (std::size_t k = 0; k < lap.size(); ++k)
    out.residual = std::max(out.residual, std::abs(lap[k] - f.values[k]));
  if (!(out.residual < 1e-8 * (1 + f.max_abs())))
    throw SolverError("model Poisson residual " + std::to_string(out.residual));
  return out;
}

// Max over nodes of the transverse gradient modulus sqrt(|v_r|^2 + |v_theta/r|^2)
// plus the tangential part 2|d_z v| when present.
inline double gradient_sup(const ConeOps& ops, std::span<const cplx> v) {
  const auto& g = ops.grid();
  auto vr = ops.d_r(v), vt = ops.d_theta(v);
  std::vector<cplx> vz;
  if (g.n_tan) vz = ops.d_z(v);
  double best = 0;
  int S = g.slice();
  for (int i = 0; i < g.n_r; ++i)
    for (int s = 0; s < S; ++s) {
      std::size_t k = std::size_t(i) * S + s;
      double e = std::norm(vr[k]) + std::norm(vt[k] / g.r(i));
      if (g.n_tan) e += 4 * std::norm(vz[k]);
      best = std::max(best, std::sqrt(e));
    }
  return best;
}

inline std::vector<double> node_radii(const ConeGrid& g) {
  std::vector<double> r(g.size());
  int S = g.slice();
  for (int i = 0; i < g.n_r; ++i)
    for (int s = 0; s < S; ++s) r[std::size_t(i) * S + s] = g.r(i);
  return r;
}

inline std::vector<double> moduli(std::span<const cplx> v) {
  std::vector<double> a(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) a[k] = std::abs(v[k]);
  return a;
}

// Decay of |d v/d xi| toward the cone point and its extrapolated limit.
inline DecayFit check_vanishing_at_cone(const Field& v, const std::string& name = "d_xi v") {
  ConeOps ops(v.grid);
  auto dxi = ops.d_xi(v.values);
  FitOptions opt;
  opt.radius = v.grid.radius;
  opt.threshold = 0;
  auto fit = fit_decay(name, node_radii(v.grid), moduli(dxi), opt);
  fit.limit = pole_extrapolation(v.grid, dxi);
  fit.limit_tolerance = 1e-4 * gradient_sup(ops, v.values);
  fit.pass = fit.exact_zero || (fit.exponent > 0 && fit.limit < fit.limit_tolerance);
  return fit;
}

// Hoelder test corpus: profiles in (r, theta) supported in r < 1/2,
// band-limited in theta (modes |m| <= 3). Non-radial members vanish at r = 0
// so that every member is Hoelder across the cone point.
struct CorpusFunction {
  std::string id;
  std::function<double(double r, double theta)> profile;
};

inline std::vector<CorpusFunction> holder_corpus(double alpha) {
  auto tent = [](double r) { return std::max(0.0, 1 - 2 * r); };
  auto bump = [](double r) { return r < 0.5 ? (1 - 4 * r * r) * (1 - 4 * r * r) : 0.0; };
  auto ring = [](double r) { return std::max(0.0, 0.25 - std::abs(r - 0.25)); };
  auto hol = [=](double r) { return std::pow(r, alpha) * bump(r); };
  return {
      {"tent_holder_cos", [=](double r, double t) { return std::pow(r, alpha) * tent(r) * std::cos(t); }},
      {"tent", [=](double r, double) { return tent(r); }},
      {"bump", [=](double r, double) { return bump(r); }},
      {"holder_radial", [=](double r, double) { return hol(r); }},
      {"holder_cos", [=](double r, double t) { return hol(r) * std::cos(t); }},
      {"linear_bump", [=](double r, double t) { return r * std::cos(t) * bump(r); }},
      {"quadratic_bump", [=](double r, double t) { return r * r * std::sin(2 * t) * bump(r); }},
      {"ring", [=](double r, double) { return ring(r); }},
      {"ring_cos", [=](double r, double t) { return ring(r) * std::cos(t); }},
      {"cubic_bump", [=](double r, double t) { return r * r * r * std::cos(3 * t) * bump(r); }},
      {"holder_sin2", [=](double r, double t) { return hol(r) * std::sin(2 * t); }},
      {"ring_holder", [=](double r, double) { return std::pow(std::abs(r - 0.25), alpha) * bump(r); }},
  };
}

// Samples a corpus profile, modulated by cos(2 pi x / period) when the grid
// has a tangential direction.
inline Field corpus_field(const ConeGrid& g, const CorpusFunction& c, double scale = 1.0) {
  return sample(g, [&](double r, double t, double x, double) {
    double tan = g.n_tan ? std::cos(2 * pi * x / g.period) : 1.0;
    return cplx(scale * c.profile(r, t) * tan);
  });
}

struct SchauderResult {
  double numerator = 0;
  double denominator = 0;
  double ratio = 0;
};

// Sum of Hoelder seminorms of v_zz, v_zzbar, v_zxi, v_zxibar on r <= window
// over the seminorm of f on r <= support (f is expected to vanish beyond).
inline SchauderResult schauder_ratio(const Field& f, double alpha, double window = 0.25,
                                     double support = 0.5) {
  if (!f.grid.n_tan) throw ValidationError("Schauder ratio needs a tangential direction");
  auto denom_sample = make_holder_sample(f.grid, alpha, support);
  SchauderResult res;
  res.denominator = holder_beta_seminorm(f.grid, f.values, denom_sample);
  if (!(res.denominator > 0)) throw ValidationError("zero Hoelder seminorm of the right-hand side");
  auto sol = solve_model_poisson(f);
  ConeOps ops(f.grid);
  auto vz = ops.d_z(sol.v.values);
  auto num_sample = make_holder_sample(f.grid, alpha, window);
  for (const auto& d : {ops.d_z(vz), ops.d_zbar(vz), ops.d_xi(vz), ops.d_xibar(vz)})
    res.numerator += holder_beta_seminorm(f.grid, d, num_sample);
  res.ratio = res.numerator / res.denominator;
  return res;
}

}  // namespace edgeflat
