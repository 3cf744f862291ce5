#pragma once
// Numerical checks of the a-priori estimates on solved states, and the decay
// oracle for the weighted second derivative of the cone Poisson problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "edgeflat/background_metric.hpp"
#include "edgeflat/decay_fit.hpp"
#include "edgeflat/model_poisson.hpp"
#include "edgeflat/monge_ampere.hpp"
#include "edgeflat/sphere.hpp"

namespace edgeflat {

namespace detail {
inline std::vector<cplx> to_complex(std::span<const double> v) { return {v.begin(), v.end()}; }
}  // namespace detail

// Dyadic annulus of every node by its cone radius; the two innermost
// annuli form the rim.
struct RimClassifier {
  std::vector<int> annulus;  // -1 outside the unit radius
  std::vector<double> radius;
  int innermost = std::numeric_limits<int>::min();
  int drop = 2;
  bool off_rim(std::size_t k) const { return annulus[k] <= innermost - drop; }
};

inline RimClassifier cover_rims(const SphereBackground& bg, int drop = 2) {
  RimClassifier out;
  out.drop = drop;
  auto marked = bg.spec.marked_points();
  out.annulus.resize(bg.z.size());
  out.radius.resize(bg.z.size());
  for (std::size_t k = 0; k < bg.z.size(); ++k) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& m : marked) d = std::min(d, std::abs(bg.z[k] - m));
    double r = std::pow(d, bg.params.beta);
    out.radius[k] = r;
    out.annulus[k] = r >= 1 ? -1 : annulus_of(r, 1.0);
    out.innermost = std::max(out.innermost, out.annulus[k]);
  }
  return out;
}

inline RimClassifier cell_rims(const ConeGrid& g, int drop = 2) {
  RimClassifier out;
  out.drop = drop;
  out.annulus.resize(g.size());
  out.radius.resize(g.size());
  std::size_t S = g.slice();
  for (int i = 0; i < g.n_r; ++i)
    for (std::size_t s = 0; s < S; ++s) {
      out.radius[i * S + s] = g.r(i);
      out.annulus[i * S + s] = annulus_of(g.r(i), 1.0);
    }
  out.innermost = annulus_of(g.r(0), 1.0);
  return out;
}

struct Peak {
  double value = -std::numeric_limits<double>::infinity();
  std::size_t node = 0;
  int annulus = 0;
  double radius = 0;
  bool off_rim = false;
};

inline Peak locate_peak(std::span<const double> f, const RimClassifier& rims) {
  Peak p;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (f[k] > p.value) {
      p.value = f[k];
      p.node = k;
    }
  p.annulus = rims.annulus[p.node];
  p.radius = rims.radius[p.node];
  p.off_rim = rims.off_rim(p.node);
  return p;
}

// ---------------------------------------------------------------------------
// Zeroth order bound.

struct C0Report {
  std::vector<std::size_t> nodes;
  std::vector<double> u_at;
  double green_term = 0;    // -n times the integral of the Green's function against omega_0
  double barrier_term = 0;  // lambda times the omega_0-average of |s|^{2 beta}
  double bound = 0;
  double min_margin = 0;
  double oscillation = 0;
  bool pass = false;
};

// u(p) <= n shift Vol_0 + lambda avg(|s|^{2b}) at evenly spread nodes. The
// unshifted kernel has mean zero, so the Green's integral is -shift Vol_0.
inline C0Report c0_check(const SphereBackground& bg, std::span<const double> u, int samples = 20,
                         const GreensFunction& green = GreensFunction()) {
  if (samples < 1) throw ValidationError("c0 check needs at least one sample point");
  C0Report out;
  double vol = 0, sb = 0;
  for (std::size_t k = 0; k < bg.G0.size(); ++k) {
    vol += bg.G0[k];
    sb += bg.s2b[k] * bg.G0[k];
  }
  vol *= bg.weight();
  sb *= bg.weight();
  out.green_term = green.shift() * vol;
  out.barrier_term = bg.params.lambda * sb / vol;
  out.bound = out.green_term + out.barrier_term;
  out.min_margin = std::numeric_limits<double>::infinity();
  std::size_t n = u.size();
  for (int j = 0; j < samples; ++j) {
    std::size_t k = (std::size_t(j) * n + n / (2 * std::size_t(samples))) / std::size_t(samples);
    out.nodes.push_back(k);
    out.u_at.push_back(u[k]);
    out.min_margin = std::min(out.min_margin, out.bound - u[k]);
  }
  auto [lo, hi] = std::minmax_element(u.begin(), u.end());
  out.oscillation = *hi - *lo;
  out.pass = out.min_margin >= 0;
  return out;
}

// ---------------------------------------------------------------------------
// Barrier form omega + eps |s|^{2 eps} i ddbar log|s|^2_h.

struct BarrierReport {
  double epsilon = 0;
  double min_eigenvalue = 0;  // relative to omega
  std::size_t node = 0;
  bool pass = false;
};

// On the cover i ddbar log|s|^2_h = -(k/2) omega_0: the section is holomorphic
// off the marked points and h is the k-th power of the Fubini-Study metric.
inline BarrierReport barrier_check(const SphereBackground& bg, double eps) {
  BarrierReport out;
  out.epsilon = eps;
  out.min_eigenvalue = std::numeric_limits<double>::infinity();
  double e = eps / bg.params.beta;
  for (std::size_t k = 0; k < bg.G.size(); ++k) {
    double dd = -0.5 * bg.spec.k * bg.G0[k];
    double q = 1 + eps * std::pow(bg.s2b[k], e) * dd / bg.G[k];
    if (q < out.min_eigenvalue) {
      out.min_eigenvalue = q;
      out.node = k;
    }
  }
  out.pass = out.min_eigenvalue >= -1e-10;
  return out;
}

// On the cone model |s|^2_h = rho |zeta|^2 and log|zeta|^2 is pluriharmonic.
inline BarrierReport barrier_check(const ConeTorusModel& model, const ConeGrid& g, double eps) {
  BarrierReport out;
  out.epsilon = eps;
  out.min_eigenvalue = std::numeric_limits<double>::infinity();
  double b = model.params().beta;
  auto gm = model.edge_metric(g);
  MetricField D = gm;
  for (int i = 0; i < g.n_r; ++i) {
    double mod = std::pow(g.r(i), 1 / b);
    double w1 = std::pow(mod, 1 - b) / b;
    for (int j = 0; j < g.n_theta; ++j) {
      cplx zeta = std::polar(mod, g.theta(j));
      for (int a = 0; a < std::max(g.n_tan, 1); ++a)
        for (int c = 0; c < std::max(g.n_tan, 1); ++c) {
          std::size_t k = g.index(i, j, a, c);
          auto J = model.rho(cplx(g.tan(a), g.tan(c)), zeta);
          double q11 = J.rzz / J.rho - std::norm(J.rz) / (J.rho * J.rho);
          double q22 = J.rzetazeta / J.rho - std::norm(J.rzeta) / (J.rho * J.rho);
          cplx q12 = J.rzzeta / J.rho - J.rz * std::conj(J.rzeta) / (J.rho * J.rho);
          double s = eps * std::pow(J.rho * mod * mod, eps);
          D.g11[k] += s * q11;
          D.g12[k] += s * q12 * w1;
          D.g22[k] += s * q22 * w1 * w1;
        }
    }
  }
  for (std::size_t k = 0; k < D.size(); ++k) {
    double q = relative_eigenvalues(gm, D, k).first;
    if (q < out.min_eigenvalue) {
      out.min_eigenvalue = q;
      out.node = k;
    }
  }
  out.pass = out.min_eigenvalue >= -1e-10;
  return out;
}

// ---------------------------------------------------------------------------
// Laplacian bound: H = e^{-L u}(n + Lap_omega u) + kappa |s|^{2 eps}.

struct LaplacianReport {
  double L = 1, kappa = 1, epsilon = 0;
  Peak H;
  Peak H_without_barrier;
  bool peak_moved = false;  // argmax differs once the barrier is dropped
  double laplacian_max = 0;
  double a1 = 0, a2 = 0;  // eigenvalue window of omega-hat relative to omega
  bool pass = false;
};

namespace detail {

inline LaplacianReport assemble_laplacian_report(std::span<const double> u, std::span<const double> lap,
                                                 std::span<const double> s2e, int n, double L, double kappa,
                                                 double eps, const RimClassifier& rims) {
  LaplacianReport out;
  out.L = L;
  out.kappa = kappa;
  out.epsilon = eps;
  std::vector<double> H(u.size()), H0(u.size());
  out.laplacian_max = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < u.size(); ++k) {
    H0[k] = std::exp(-L * u[k]) * (n + lap[k]);
    H[k] = H0[k] + kappa * s2e[k];
    out.laplacian_max = std::max(out.laplacian_max, lap[k]);
  }
  out.H = locate_peak(H, rims);
  out.H_without_barrier = locate_peak(H0, rims);
  out.peak_moved = out.H.node != out.H_without_barrier.node;
  out.pass = out.H.off_rim;
  return out;
}

}  // namespace detail

inline LaplacianReport laplacian_bound_check(const CoverProblem& p, const SphereBackground& bg,
                                             std::span<const double> u, double L, double kappa, double eps) {
  auto hat = p.hat(u);
  auto lap = p.laplacian(p.background(), u);
  std::vector<double> s2e(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) s2e[k] = std::pow(bg.s2b[k], eps / bg.params.beta);
  auto out = detail::assemble_laplacian_report(u, lap, s2e, 1, L, kappa, eps, cover_rims(bg));
  std::tie(out.a1, out.a2) = equivalence_window(p.background(), hat);
  return out;
}

inline std::vector<double> cone_section_power(const ConeTorusModel& model, const ConeGrid& g, double eps) {
  std::vector<double> out(g.size());
  double b = model.params().beta;
  for (int i = 0; i < g.n_r; ++i) {
    double mod = std::pow(g.r(i), 1 / b);
    for (int j = 0; j < g.n_theta; ++j)
      for (int a = 0; a < std::max(g.n_tan, 1); ++a)
        for (int c = 0; c < std::max(g.n_tan, 1); ++c) {
          std::size_t k = g.index(i, j, a, c);
          double rho = model.rho(cplx(g.tan(a), g.tan(c)), std::polar(mod, g.theta(j))).rho;
          out[k] = std::pow(rho * mod * mod, eps);
        }
  }
  return out;
}

inline LaplacianReport laplacian_bound_check(const CellProblem& p, const ConeTorusModel& model,
                                             std::span<const double> u, double L, double kappa, double eps) {
  auto hat = p.hat(u);
  auto lap = p.laplacian(p.background(), u);
  auto s2e = cone_section_power(model, p.grid(), eps);
  auto out = detail::assemble_laplacian_report(u, lap, s2e, 2, L, kappa, eps, cell_rims(p.grid()));
  std::tie(out.a1, out.a2) = equivalence_window(p.background(), hat);
  return out;
}

// Smallest holomorphic bisectional curvature of the cone model over the scan
// points, sampled over unit vector pairs in a unitary frame.
inline double min_bisectional_curvature(const ConeTorusModel& model, int annuli = 8, int angles = 12) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& pt : psi_scan_points(model.params().beta, annuli)) {
    auto c = model.curvature_psi(pt.z, pt.w);
    auto E = detail::unitary_frame<2>(c.g);
    auto Ec = E.conjugate();
    cplx Rf[2][2][2][2];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int cc = 0; cc < 2; ++cc)
          for (int d = 0; d < 2; ++d) {
            cplx s = 0;
            for (int i = 0; i < 2; ++i)
              for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                  for (int l = 0; l < 2; ++l) s += E(i, a) * Ec(j, b) * E(k, cc) * Ec(l, d) * c.R[i][j][k][l];
            Rf[a][b][cc][d] = s;
          }
    for (int it = 0; it <= angles; ++it)
      for (int ip = 0; ip < angles; ++ip) {
        double t = 0.5 * pi * it / angles;
        cplx ph = std::polar(1.0, 2 * pi * ip / angles);
        cplx x[2] = {std::cos(t), ph * std::sin(t)};
        cplx y[2] = {-std::conj(ph) * std::sin(t), std::cos(t)};
        cplx s = 0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int cc = 0; cc < 2; ++cc)
              for (int d = 0; d < 2; ++d) s += Rf[a][b][cc][d] * x[a] * std::conj(x[b]) * y[cc] * std::conj(y[d]);
        lo = std::min(lo, s.real());
      }
  }
  return lo;
}

// L with L + inf bisectional curvature >= 2; in dimension one there is no
// pair of orthogonal directions and L = 1.
inline double laplacian_weight(const ConeTorusModel& model) {
  return std::max(1.0, 2 - min_bisectional_curvature(model));
}

// ---------------------------------------------------------------------------
// Sobolev ratio (int |v|^4)^{1/2} / (int |dv|^2 + int |v|^2) over random bumps.

struct BumpSpec {
  int point = 0;      // marked point whose chart carries the bump
  cplx centre = 0;    // in the xi chart
  double sigma = 0.2;
  double tan_x = 0, tan_y = 0;  // tangential centre on the cell
};

namespace detail {

inline double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline double bump_profile(double d) { return d < 1 ? std::exp(1 - 1 / (1 - d * d)) : 0.0; }

}  // namespace detail

// A quarter of the bumps are radial about the cone point, the rest are
// centred off it with support avoiding it.
inline std::vector<BumpSpec> sobolev_trials(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<BumpSpec> out;
  for (int t = 0; t < trials; ++t) {
    BumpSpec b;
    b.point = int(rng() % 3);
    bool radial = detail::unit_uniform(rng) < 0.25;
    if (radial) {
      b.sigma = 0.2 + 0.25 * detail::unit_uniform(rng);
    } else {
      b.sigma = 0.15 + 0.15 * detail::unit_uniform(rng);
      double m = b.sigma + 0.02 + (0.55 - b.sigma - 0.02) * detail::unit_uniform(rng);
      b.centre = std::polar(m, 2 * pi * detail::unit_uniform(rng));
    }
    b.tan_x = detail::unit_uniform(rng);
    b.tan_y = detail::unit_uniform(rng);
    out.push_back(b);
  }
  return out;
}

struct SobolevReport {
  int trials = 0;
  double max_ratio = 0;
  int argmax = 0;
  double constant_ratio = 0;  // v = 1 gives Vol^{1/2}/Vol
  std::vector<double> ratios;
};

inline std::vector<double> cover_bump(const SphereBackground& bg, const BumpSpec& b) {
  cplx p = bg.spec.marked_points()[b.point];
  double beta = bg.params.beta;
  std::vector<double> v(bg.z.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    cplx zeta = bg.z[k] - p;
    double m = std::abs(zeta);
    cplx xi = m > 0 ? zeta * std::pow(m, beta - 1) : cplx(0);
    v[k] = detail::bump_profile(std::abs(xi - b.centre) / b.sigma);
  }
  return v;
}

inline double sobolev_ratio(const CoverProblem& p, std::span<const double> v) {
  auto vw = p.ops().d_w(detail::to_complex(v));
  auto vol = p.volume();
  double w = p.volume()[0] / p.background().g11[0];
  double q4 = 0, q2 = 0, e = 0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    double v2 = v[k] * v[k];
    q4 += v2 * v2 * vol[k];
    q2 += v2 * vol[k];
    e += std::norm(vw[k]) * w;
  }
  return std::sqrt(q4) / (e + q2);
}

inline SobolevReport sobolev_ratio_check(const CoverProblem& p, const SphereBackground& bg, int trials,
                                         std::uint64_t seed) {
  SobolevReport out;
  out.trials = trials;
  int t = 0;
  for (const auto& b : sobolev_trials(trials, seed)) {
    double r = sobolev_ratio(p, cover_bump(bg, b));
    out.ratios.push_back(r);
    if (r > out.max_ratio) {
      out.max_ratio = r;
      out.argmax = t;
    }
    ++t;
  }
  std::vector<double> one(p.size(), 1.0);
  out.constant_ratio = sobolev_ratio(p, one);
  return out;
}

inline std::vector<double> cell_bump(const ConeGrid& g, const BumpSpec& b) {
  auto f = sample(g, [&](double r, double th, double x, double y) {
    double d = std::abs(std::polar(r, th) - b.centre) / b.sigma;
    double tx = std::cos(2 * pi * (x / g.period - b.tan_x)) + std::cos(2 * pi * (y / g.period - b.tan_y));
    return cplx(detail::bump_profile(d) * std::exp(tx - 2));
  });
  std::vector<double> v(g.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = f.values[k].real();
  return v;
}

// |dv|^2_g = A |v_z|^2 + C |e2 v|^2 + 2 Re(conj(B) v_z conj(e2 v)), e2 v = (e^{-i theta}/2)(v_r - i v_theta/(b r)).
inline double sobolev_ratio(const CellProblem& p, std::span<const double> v) {
  const auto& g = p.grid();
  const auto& ops = p.ops();
  const auto& m = p.background();
  auto vc = detail::to_complex(v);
  auto vz = ops.d_z(vc), vr = ops.d_r(vc), vt = ops.d_theta(vc);
  auto vol = p.volume();
  double q4 = 0, q2 = 0, e = 0;
  std::size_t S = g.slice(), T2 = g.tan_count();
  for (int i = 0; i < g.n_r; ++i)
    for (std::size_t s = 0; s < S; ++s) {
      std::size_t k = i * S + s;
      double th = g.theta(int(s / T2));
      cplx e2 = 0.5 * std::polar(1.0, -th) * (vr[k] - I * vt[k] / (g.beta * g.r(i)));
      auto [A, B, C] = m.inverse(k);
      double grad = A.real() * std::norm(vz[k]) + C.real() * std::norm(e2) +
                    2 * (std::conj(B) * vz[k] * std::conj(e2)).real();
      double v2 = v[k] * v[k];
      q4 += v2 * v2 * vol[k];
      q2 += v2 * vol[k];
      e += grad * vol[k];
    }
  return std::sqrt(q4) / (e + q2);
}

inline SobolevReport sobolev_ratio_check(const CellProblem& p, int trials, std::uint64_t seed) {
  SobolevReport out;
  out.trials = trials;
  int t = 0;
  for (const auto& b : sobolev_trials(trials, seed)) {
    double r = sobolev_ratio(p, cell_bump(p.grid(), b));
    out.ratios.push_back(r);
    if (r > out.max_ratio) {
      out.max_ratio = r;
      out.argmax = t;
    }
    ++t;
  }
  std::vector<double> one(p.size(), 1.0);
  out.constant_ratio = sobolev_ratio(p, one);
  return out;
}

// ---------------------------------------------------------------------------
// Third order quantity S = |D^3 u|^2_{omega-hat} and Q on the cover.

struct ThirdOrderReport {
  std::vector<double> S;
  Peak S_peak, Q_peak;
  DecayFit covariant_b;  // |zeta|^{3-3b} |D^3 u(d_zeta, d_zetabar, d_zeta)|
  DecayFit s_holder;     // |S - S(cone point)|
  std::array<double, 3> cone_value{};
  double L = 1, kappa = 1, epsilon = 0;
  double trailing = 0;
};

// T = d_w u_{w wbar} - Gamma u_{w wbar} with Gamma = d_w log G; S = |T|^2 / G-hat^3.
inline ThirdOrderReport third_order_check(const CoverProblem& p, const SphereBackground& bg, std::span<const double> u,
                                          double L, int annuli = 10) {
  const auto& ops = p.ops();
  const ConeParams& prm = bg.params;
  ThirdOrderReport out;
  out.L = L;
  out.kappa = prm.kappa;
  out.epsilon = prm.eps();
  auto uww = ops.ddbar(detail::to_complex(u));
  out.trailing = ops.trailing_energy(uww);
  if (out.trailing > 1e-8)
    throw ResolutionError("third derivatives unresolved: trailing spectral energy " + std::to_string(out.trailing));
  std::size_t n = p.size();
  std::vector<cplx> logG(n);
  for (std::size_t k = 0; k < n; ++k) {
    uww[k] = uww[k].real();
    logG[k] = std::log(bg.G[k]);
  }
  auto gam = ops.d_w(logG);
  auto duww = ops.d_w(uww);
  std::vector<cplx> T(n), Sc(n);
  out.S.resize(n);
  std::vector<double> Q(n);
  double e = out.epsilon / prm.beta;
  for (std::size_t k = 0; k < n; ++k) {
    T[k] = duww[k] - gam[k] * uww[k];
    double gh = bg.G[k] + uww[k].real();
    out.S[k] = std::norm(T[k]) / (gh * gh * gh);
    Sc[k] = out.S[k];
    Q[k] = out.S[k] + (L + 1) / out.kappa * uww[k].real() / bg.G[k] + std::pow(bg.s2b[k], e);
  }
  auto rims = cover_rims(bg);
  out.S_peak = locate_peak(out.S, rims);
  out.Q_peak = locate_peak(Q, rims);

  CoverMap map(bg.spec.marked_points());
  auto cT = ops.coefficients(T), cS = ops.coefficients(Sc);
  auto bps = map.branch_points();
  for (int b = 0; b < 3; ++b) out.cone_value[b] = ops.interpolate(cS, bps[b]).real();
  std::vector<double> rs, qb, qs;
  double beta = prm.beta;
  for (const auto& pt : ring_points(map, beta, annuli)) {
    auto j = map.jet<1>(pt.w);
    cplx z = j.value(), dz = j.derivative({1, 0});
    double zeta = std::abs(z - map.marked()[map.marked_index_of_branch(pt.branch)]);
    double t = std::abs(ops.interpolate(cT, pt.w));
    double s = ops.interpolate(cS, pt.w).real();
    rs.push_back(pt.r);
    qb.push_back(std::pow(zeta, 3 - 3 * beta) * t / std::pow(std::abs(dz), 3));
    qs.push_back(std::abs(s - out.cone_value[pt.branch]));
  }
  FitOptions opt;
  opt.scale_power = 1 / beta;
  opt.scale = "|zeta|";
  opt.threshold = prm.alpha * beta - 0.1;
  opt.zero_tol = 1e-12;
  out.covariant_b = fit_decay("covariant.derivatives.b", rs, qb, opt);
  out.s_holder = fit_decay("S.Holder", rs, qs, opt);
  return out;
}

// ---------------------------------------------------------------------------
// Lipschitz bounds for the weighted second derivatives on the n = 2 cell:
// phi = H11, psi = b conj(H12), chi = b^2 H22 in the edge frame.

struct LipschitzReport {
  double phi = 0, psi = 0, chi = 0;
  DecayFit psi_decay;
};

inline LipschitzReport lipschitz_second_derivative_check(const CellProblem& p, std::span<const double> u,
                                                         const ConeParams& prm, double outer = 0.5) {
  const auto& g = p.grid();
  const auto& m = p.background();
  double b = g.beta;
  auto H = edge_hessian(p.ops(), u);
  std::size_t n = g.size();
  std::vector<cplx> phi(n), psi(n), chi(n);
  for (std::size_t k = 0; k < n; ++k) {
    phi[k] = H.g11[k];
    psi[k] = b * std::conj(H.g12[k]);
    chi[k] = b * b * H.g22[k];
  }
  // Riemannian length of an edge-frame displacement v at the averaged metric.
  auto length = [&](std::size_t k1, std::size_t k2, cplx v1, cplx v2) {
    double g11 = 0.5 * (m.g11[k1] + m.g11[k2]), g22 = 0.5 * (m.g22[k1] + m.g22[k2]);
    cplx g12 = 0.5 * (m.g12[k1] + m.g12[k2]);
    double q = g11 * std::norm(v1) + g22 * std::norm(v2) + 2 * (g12 * v1 * std::conj(v2)).real();
    return std::sqrt(2 * q);
  };
  LipschitzReport out;
  auto update = [&](std::size_t k1, std::size_t k2, double d) {
    if (!(d > 0)) return;
    out.phi = std::max(out.phi, std::abs(phi[k1] - phi[k2]) / d);
    out.psi = std::max(out.psi, std::abs(psi[k1] - psi[k2]) / d);
    out.chi = std::max(out.chi, std::abs(chi[k1] - chi[k2]) / d);
  };
  int T = std::max(g.n_tan, 1);
  double dt = g.n_tan ? g.period / g.n_tan : 0;
  double dth = 2 * pi / g.n_theta;
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j)
      for (int a = 0; a < T; ++a)
        for (int c = 0; c < T; ++c) {
          std::size_t k = g.index(i, j, a, c);
          double th = g.theta(j);
          if (i + 1 < g.n_r) {
            std::size_t k2 = g.index(i + 1, j, a, c);
            update(k, k2, length(k, k2, 0, std::polar(g.r(i + 1) - g.r(i), th)));
          }
          std::size_t kt = g.index(i, (j + 1) % g.n_theta, a, c);
          update(kt, k, length(k, kt, 0, I * b * g.r(i) * std::polar(2 * std::sin(dth / 2), th + dth / 2)));
          if (g.n_tan) {
            std::size_t kx = g.index(i, j, (a + 1) % T, c), ky = g.index(i, j, a, (c + 1) % T);
            update(k, kx, length(k, kx, dt, 0));
            update(k, ky, length(k, ky, I * dt, 0));
          }
        }
  std::vector<double> rs(n), vals(n);
  std::size_t S = g.slice();
  for (std::size_t k = 0; k < n; ++k) {
    rs[k] = g.r(int(k / S));
    vals[k] = std::abs(psi[k]);
  }
  FitOptions opt;
  opt.radius = outer;
  opt.scale_power = 1 / b;
  opt.scale = "|zeta|";
  opt.threshold = prm.beta - 0.1;
  out.psi_decay = fit_decay("psi_l", rs, vals, opt);
  return out;
}

// ---------------------------------------------------------------------------
// Curvature of the solved metric at t = 1.

struct FinalCurvatureReport {
  double residual = 0;       // sup off the rim
  double tolerance = 1e-5;
  DecayFit scan;             // |K-hat| on rings about the cone points (n = 1)
  bool pass = false;
};

inline FinalCurvatureReport final_curvature_check(const CoverProblem& p, const SphereBackground& bg,
                                                  const SolveState& s, double tol = 1e-5, int annuli = 10) {
  if (s.t != 1) throw ValidationError("final curvature needs the state at t = 1");
  FinalCurvatureReport out;
  out.tolerance = tol;
  out.residual = flat_curvature_residual(p, bg, s).sup;
  auto K = p.gaussian_curvature(p.hat(s.u));
  auto cK = p.ops().coefficients(detail::to_complex(K));
  CoverMap map(bg.spec.marked_points());
  std::vector<double> rs, vals;
  for (const auto& pt : ring_points(map, bg.params.beta, annuli)) {
    rs.push_back(pt.r);
    vals.push_back(std::abs(p.ops().interpolate(cK, pt.w)));
  }
  FitOptions opt;
  opt.zero_tol = tol;  // values inside the residual tolerance count as flat
  out.scan = fit_decay("final.curvature", rs, vals, opt);
  out.pass = out.residual < tol && out.scan.pass;
  return out;
}

// Ric(omega-hat) - Ric(omega) + i ddbar(t F) = -i ddbar(residual), measured in omega-hat.
inline FinalCurvatureReport final_curvature_check(const CellProblem& p, const SolveState& s, double tol = 1e-5) {
  if (s.t != 1) throw ValidationError("final curvature needs the state at t = 1");
  FinalCurvatureReport out;
  out.tolerance = tol;
  auto hat = p.hat(s.u);
  auto res = ma_residual(p, s, hat);
  auto H = edge_hessian(p.ops(), res, false);
  auto rims = cell_rims(p.grid());
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!rims.off_rim(k)) continue;
    auto [A, B, C] = hat.inverse(k);
    // Frobenius norm of the endomorphism hat^{-1} H.
    Eigen::Matrix2cd Mi, Mh;
    Mi << A, B, std::conj(B), C;
    Mh << H.g11[k], H.g12[k], std::conj(H.g12[k]), H.g22[k];
    out.residual = std::max(out.residual, (Mi * Mh).norm());
  }
  out.scan.quantity = "final.curvature";
  out.scan.pass = true;
  out.pass = out.residual < tol;
  return out;
}

// ---------------------------------------------------------------------------
// Moser iteration inputs on the cover with N - u >= 1.

struct MoserReport {
  double N = 0;
  double min_gap = 0;     // min(N - u)
  double l1 = 0;          // int (N - u) omega
  double energy = 0;      // int |du|^2 omega
  double pairing = 0;     // int (N - u)(e^{tF - c} - 1) omega
  double identity_error = 0;
  double energy_bound = 0;  // sup|e^{tF - c} - 1| int (N - u) omega
  double l4 = 0;          // int (N - u)^4 omega
  bool pass = false;
};

inline MoserReport moser_check(const CoverProblem& p, const SolveState& s, double N) {
  MoserReport out;
  out.N = N;
  auto vol = p.volume();
  auto F = p.F();
  double w = vol[0] / p.background().g11[0];
  auto uw = p.ops().d_w(detail::to_complex(s.u));
  out.min_gap = std::numeric_limits<double>::infinity();
  double sup_e = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    double gap = N - s.u[k];
    double e = std::expm1(s.t * F[k] - s.c);
    out.min_gap = std::min(out.min_gap, gap);
    out.l1 += gap * vol[k];
    out.pairing += gap * e * vol[k];
    out.energy += std::norm(uw[k]) * w;
    out.l4 += gap * gap * gap * gap * vol[k];
    sup_e = std::max(sup_e, std::abs(e));
  }
  out.energy_bound = sup_e * out.l1;
  out.identity_error = std::abs(out.pairing - out.energy) / std::max(out.energy, 1e-300);
  out.pass = out.min_gap >= 1 && out.energy <= out.energy_bound * (1 + 1e-12) && std::isfinite(out.l4) &&
             (out.energy == 0 || out.identity_error < 1e-6);
  return out;
}

// ---------------------------------------------------------------------------
// Weighted second derivative decay for the cone Poisson problem. With
// |zeta|^{2-2b} v_{zeta zetabar} = f, i.e. Lap_Omega v = f / b^2, the quantity
// |zeta|^{2-2b} (v_{zeta zeta} + ((1-b)/zeta) v_zeta) in polar xi coordinates is
//   W = (e^{-2i theta}/4)(b^2 v_rr - b^2 v_r/r - 2ib v_rt/r + 2ib v_t/r^2 - v_tt/r^2).

inline DecayFit appendix_decay_check(const Field& f, const ConeParams& prm, double window = 0.25) {
  if (!prm.appendix_hypothesis())
    throw HypothesisError("decay check needs alpha * beta < 1 - 2 * beta");
  const ConeGrid& g = f.grid;
  if (std::abs(g.beta - prm.beta) > 1e-14) throw ValidationError("decay check grid and parameters disagree on beta");
  double b = prm.beta;
  Field rhs = f;
  for (auto& x : rhs.values) x /= b * b;
  auto sol = solve_model_poisson(rhs);
  ConeOps ops(g);
  std::vector<cplx> zero(g.slice(), 0.0);
  const auto& v = sol.v.values;
  auto vr = ops.d_r(v, zero), vrr = ops.d_rr(v, zero), vt = ops.d_theta(v), vtt = ops.d_theta2(v);
  auto vrt = ops.d_theta(vr);
  std::vector<double> rs(g.size()), vals(g.size());
  double scale = 0;
  std::size_t S = g.slice(), T2 = g.tan_count();
  for (int i = 0; i < g.n_r; ++i) {
    double r = g.r(i);
    for (std::size_t s = 0; s < S; ++s) {
      std::size_t k = i * S + s;
      double th = g.theta(int(s / T2));
      cplx W = 0.25 * std::polar(1.0, -2 * th) *
               (b * b * vrr[k] - b * b * vr[k] / r - 2.0 * I * b * vrt[k] / r + 2.0 * I * b * vt[k] / (r * r) -
                vtt[k] / (r * r));
      rs[k] = r;
      vals[k] = std::abs(W);
      scale = std::max(scale, std::abs(f.values[k]));
    }
  }
  FitOptions opt;
  opt.radius = window;
  opt.scale_power = 1 / b;
  opt.scale = "|zeta|";
  opt.threshold = prm.alpha * b - 0.1;
  opt.zero_tol = 1e-6 * std::max(scale, 1e-300);
  return fit_decay("appendix.decay", rs, vals, opt);
}

// ---------------------------------------------------------------------------
// Refinement comparison of a scalar between two resolutions.

struct RefinementCheck {
  std::string name;
  double coarse = 0, fine = 0, change = 0, tolerance = 0;
  bool pass = false;
};

inline RefinementCheck refinement_check(std::string name, double coarse, double fine, double tol) {
  RefinementCheck c;
  c.name = std::move(name);
  c.coarse = coarse;
  c.fine = fine;
  c.tolerance = tol;
  double s = std::max(std::abs(coarse), std::abs(fine));
  c.change = s > 0 ? std::abs(fine - coarse) / s : 0.0;
  c.pass = c.change < tol;
  return c;
}

// ---------------------------------------------------------------------------
// All estimates on a solved n = 1 state at two resolutions.

struct EstimateOptions {
  int c0_samples = 20;
  int sobolev_trials = 100;
  std::uint64_t seed = 1;
};

struct CoverEstimates {
  C0Report c0;
  BarrierReport barrier;
  LaplacianReport laplacian;
  LaplacianReport laplacian_no_barrier;
  SobolevReport sobolev;
  ThirdOrderReport third;
  MoserReport moser;
  FinalCurvatureReport curvature;
};

inline CoverEstimates cover_estimates(const CoverProblem& p, const SphereBackground& bg, const SolveState& s,
                                      const EstimateOptions& opt = {}) {
  const ConeParams& prm = bg.params;
  double L = 1;
  CoverEstimates out;
  out.c0 = c0_check(bg, s.u, opt.c0_samples);
  out.barrier = barrier_check(bg, prm.eps());
  out.laplacian = laplacian_bound_check(p, bg, s.u, L, prm.kappa, prm.eps());
  out.laplacian_no_barrier = laplacian_bound_check(p, bg, s.u, L, 0.0, prm.eps());
  out.sobolev = sobolev_ratio_check(p, bg, opt.sobolev_trials, opt.seed);
  out.third = third_order_check(p, bg, s.u, L);
  out.moser = moser_check(p, s, out.c0.bound + 1);
  out.curvature = final_curvature_check(p, bg, s);
  return out;
}

struct CoverRefinement {
  CoverEstimates coarse, fine;
  std::vector<RefinementCheck> checks;
  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

inline CoverRefinement compare_cover_estimates(CoverEstimates coarse, CoverEstimates fine) {
  CoverRefinement out;
  out.checks.push_back(refinement_check("c0.oscillation", coarse.c0.oscillation, fine.c0.oscillation, 0.10));
  out.checks.push_back(refinement_check("laplacian.a1", coarse.laplacian.a1, fine.laplacian.a1, 0.05));
  out.checks.push_back(refinement_check("laplacian.a2", coarse.laplacian.a2, fine.laplacian.a2, 0.05));
  out.checks.push_back(refinement_check("sobolev.max_ratio", coarse.sobolev.max_ratio, fine.sobolev.max_ratio, 0.10));
  out.checks.push_back(refinement_check("S.max", coarse.third.S_peak.value, fine.third.S_peak.value, 0.10));
  out.checks.push_back(refinement_check("Q.max", coarse.third.Q_peak.value, fine.third.Q_peak.value, 0.10));
  out.coarse = std::move(coarse);
  out.fine = std::move(fine);
  return out;
}

}  // namespace edgeflat
