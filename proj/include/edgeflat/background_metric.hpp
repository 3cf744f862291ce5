#pragma once
// Background edge metric omega = omega_0 + lambda i ddbar(|s|_h^{2 beta}),
// its Ricci potential F and curvature scans, for two geometries:
//  * p1_marked: the sphere with k = 3 cone points of angle 2 pi/3, carried on
//    its Z_3 branched cover (the hexagonal torus), where everything is smooth;
//  * cone_torus: the local model (cone disk) x (flat torus) with a prescribed
//    smooth rho, |s|_h^{2 beta} = rho |zeta|^{2 beta} and omega_0 flat.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "edgeflat/branched_cover.hpp"
#include "edgeflat/cone_geometry.hpp"
#include "edgeflat/decay_fit.hpp"
#include "edgeflat/kahler_jets.hpp"

namespace edgeflat {

enum class Variant { p1_marked, cone_torus };

inline std::string variant_name(Variant v) { return v == Variant::p1_marked ? "p1_marked" : "cone_torus"; }

struct GeometrySpec {
  Variant variant = Variant::p1_marked;
  // p1_marked: degree of the section and its zeros (default: cube roots of 1)
  int k = 3;
  std::vector<cplx> marked;
  int cover_n = 48;
  // cone_torus: log rho = c0 cos x + c1 sin y + c2 Re zeta + c3 Im zeta cos x + c4 |zeta|^2
  std::array<double, 5> rho{0.2, 0.2, 0.3, 0.2, 0.2};
  double period = 2 * pi;

  std::array<cplx, 3> marked_points() const {
    if (marked.empty()) {
      cplx om = std::polar(1.0, 2 * pi / 3);
      return {1.0, om, om * om};
    }
    return {marked[0], marked[1], marked[2]};
  }

  void validate(const ConeParams& p) const {
    p.validate();
    if (variant == Variant::p1_marked) {
      if (std::abs(k * (1 - p.beta) - 2) > 1e-12)
        throw ValidationError("class condition k (1 - beta) = 2 fails for k = " + std::to_string(k) +
                              ", beta = " + std::to_string(p.beta));
      if (!marked.empty() && int(marked.size()) != k)
        throw ValidationError("number of marked points must equal k");
      HexTorus{cover_n}.validate();
    } else {
      if (!(period > 0)) throw ValidationError("torus period must be positive");
    }
  }
};

// Hermitian metric per node: g11 = g_{1 1bar}, g12 = g_{1 2bar}, g22 (n = 2).
struct MetricField {
  int n = 1;
  Frame frame = Frame::psi;
  std::vector<double> g11, g22;
  std::vector<cplx> g12;

  std::size_t size() const { return g11.size(); }
  double det(std::size_t k) const {
    if (n == 1) return g11[k];
    return g11[k] * g22[k] - std::norm(g12[k]);
  }
  // Inverse entries (A, B, C): g^{-1} = [[A, B], [conj B, C]] as a matrix
  // inverse of [[g11, g12], [conj g12, g22]].
  std::array<cplx, 3> inverse(std::size_t k) const {
    if (n == 1) return {1.0 / g11[k], 0.0, 0.0};
    double d = det(k);
    return {g22[k] / d, -g12[k] / d, g11[k] / d};
  }
  double min_eigenvalue(std::size_t k) const {
    if (n == 1) return g11[k];
    double tr = g11[k] + g22[k];
    double disc = std::sqrt(std::max(0.0, 0.25 * (g11[k] - g22[k]) * (g11[k] - g22[k]) + std::norm(g12[k])));
    return 0.5 * tr - disc;
  }
  // Throws naming the first non-positive node.
  void require_positive(const std::string& what) const {
    for (std::size_t k = 0; k < size(); ++k) {
      double e = min_eigenvalue(k);
      if (!(e > 0))
        throw ValidationError(what + " not positive definite at node " + std::to_string(k) +
                              " (smallest eigenvalue " + std::to_string(e) + ")");
    }
  }
};

// ---------------------------------------------------------------------------
// p1_marked on the branched cover

// Sampled background on the cover torus. Densities are w-frame coefficients
// of i dw dwbar; integrals over the sphere are (1/3) of torus integrals.
struct SphereBackground {
  HexTorus grid;
  ConeParams params;
  GeometrySpec spec;
  std::vector<cplx> z;       // pi(w)
  std::vector<cplx> dz;      // pi'(w)
  std::vector<double> G0;    // omega_0 density
  std::vector<double> G;     // omega density
  std::vector<double> s2b;   // |s|_h^{2 beta} o pi
  std::vector<double> K;     // Gaussian curvature of omega (pointwise jets)
  std::vector<double> lower_form;  // omega - omega_0 - lambda beta |s|^{2b} ddbar log|s|^2
  std::vector<double> five_term_error;
  std::vector<double> F0, F;
  double f0_rhs_mean = 0;

  MetricField metric() const {
    MetricField m;
    m.n = 1;
    m.frame = Frame::psi;
    m.g11 = G;
    return m;
  }
  MetricField reference_metric() const {
    MetricField m;
    m.n = 1;
    m.frame = Frame::psi;
    m.g11 = G0;
    return m;
  }
  // Torus quadrature weight for i dw dwbar = 2 dx dy, divided by the degree.
  double weight() const { return 2 * grid.cell_area() / 3; }
  double integrate(std::span<const double> density) const {
    double s = 0;
    for (double x : density) s += x;
    return s * weight();
  }
};

namespace detail {

template <int K>
struct SpherePointJets {
  Jet<2, K> Z, Zc, phi, logs2, G0;
};

template <int K>
SpherePointJets<K> sphere_point_jets(const CoverMap& map, const GeometrySpec& spec, const ConeParams& p,
                                     cplx w) {
  SpherePointJets<K> j;
  j.Z = map.template jet<K>(w);
  j.Zc = conj_pairs(j.Z);
  auto marked = spec.marked_points();
  Jet<2, K> P(1.0);
  for (const auto& m : marked) P = P * (j.Z - m);
  auto logP = log(P);
  auto one = 1.0 + j.Z * j.Zc;
  auto lq = log(one);
  j.logs2 = logP + conj_pairs(logP) - double(spec.k) * lq;
  j.logs2 = j.logs2 - cplx(0, j.logs2.value().imag());
  j.phi = exp(p.beta * j.logs2);
  j.G0 = (2.0 * lq).d(0).d(1);
  return j;
}

}  // namespace detail

inline SphereBackground build_sphere_background(const GeometrySpec& spec, const ConeParams& p) {
  spec.validate(p);
  if (spec.variant != Variant::p1_marked) throw ValidationError("sphere background needs p1_marked");
  SphereBackground bg;
  bg.grid = HexTorus{spec.cover_n};
  bg.params = p;
  bg.spec = spec;
  CoverMap map(spec.marked_points());
  std::size_t n = bg.grid.size();
  bg.z.resize(n);
  bg.dz.resize(n);
  bg.G0.resize(n);
  bg.G.resize(n);
  bg.s2b.resize(n);
  bg.K.resize(n);
  bg.lower_form.resize(n);
  bg.five_term_error.resize(n);
  std::vector<cplx> ric0(n);
  double rhs_scale = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cplx w = bg.grid.node(k);
    auto j = detail::sphere_point_jets<4>(map, spec, p, w);
    bg.z[k] = j.Z.value();
    bg.dz[k] = j.Z.derivative({1, 0});
    double zz = std::norm(bg.z[k]);
    double g0_closed = 2 * std::norm(bg.dz[k]) / ((1 + zz) * (1 + zz));
    auto ddphi = j.phi.d(0).d(1);
    auto G = j.G0 + p.lambda * ddphi;
    bg.G0[k] = g0_closed;
    bg.G[k] = G.value().real();
    bg.s2b[k] = j.phi.value().real();
    // Gaussian curvature -G^{-1} ddbar log G from the 2-jet of G.
    bg.K[k] = (-(log(G).d(0).d(1)).value() / G.value()).real();
    // Expanded five-term form: phi (beta ddbar L + beta^2 |dL|^2) with L = log|s|^2.
    auto dL = j.logs2.d(0).value(), ddL = j.logs2.d(0).d(1).value();
    double phiv = bg.s2b[k];
    double expanded = g0_closed + p.lambda * phiv * (p.beta * ddL.real() + p.beta * p.beta * std::norm(dL));
    bg.five_term_error[k] = std::abs(expanded - bg.G[k]) / bg.G[k];
    bg.lower_form[k] = bg.G[k] - g0_closed - p.lambda * p.beta * phiv * ddL.real();
    // Ric(omega_0) + (1 - beta) i ddbar log|s|_h^2 on the cover.
    auto l0 = (-(log(2.0 / ((1.0 + j.Z * j.Zc) * (1.0 + j.Z * j.Zc))))).d(0).d(1).value();
    ric0[k] = l0 + (1 - p.beta) * ddL;
    rhs_scale = std::max(rhs_scale, std::abs(l0));
  }
  MetricField(bg.metric()).require_positive("background metric");
  TorusOps ops(bg.grid);
  double mean = 0;
  for (auto& x : ric0) mean += x.real();
  bg.f0_rhs_mean = mean / double(n);
  auto f0 = ops.solve_ddbar(ric0, rhs_scale);
  bg.F0.resize(n);
  bg.F.resize(n);
  double kb = 2 - spec.k * (1 - p.beta);
  for (std::size_t k = 0; k < n; ++k) {
    auto marked = spec.marked_points();
    cplx P = 1.0;
    for (const auto& m : marked) P *= bg.z[k] - m;
    bg.F0[k] = f0[k].real();
    bg.F[k] = bg.F0[k] - ((2 - 2 * p.beta) * std::log(std::abs(P)) + kb * std::log1p(std::norm(bg.z[k])) +
                          std::log(bg.G[k]) - std::log(2.0) - 2 * std::log(std::abs(bg.dz[k])));
  }
  return bg;
}

// Ricci residual |Ric_omega - i ddbar F|_g per node (spectral on the cover).
inline std::vector<double> ricci_residual(const SphereBackground& bg) {
  TorusOps ops(bg.grid);
  std::size_t n = bg.grid.size();
  std::vector<cplx> logG(n), F(n);
  for (std::size_t k = 0; k < n; ++k) {
    logG[k] = std::log(bg.G[k]);
    F[k] = bg.F[k];
  }
  auto ric = ops.ddbar(logG);
  auto ddF = ops.ddbar(F);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = std::abs(-ric[k] - ddF[k]) / bg.G[k];
  return out;
}

// Polar sample points around each branch point of the cover, with the cone
// radius r = |z - p|^beta of their image (the |z_n| scale).
struct RingPoint {
  cplx w;
  int branch;
  double r;
};

inline std::vector<RingPoint> ring_points(const CoverMap& map, double beta, int annuli = 10, int per_annulus = 3,
                                          int angles = 12, double outer = 0.25) {
  std::vector<RingPoint> pts;
  auto bps = map.branch_points();
  for (int b = 0; b < 3; ++b) {
    cplx pz = map.marked()[map.marked_index_of_branch(b)];
    for (int j = 0; j < annuli; ++j)
      for (int q = 0; q < per_annulus; ++q) {
        double rho = outer * std::ldexp(1.0, -j) * std::pow(0.5, (q + 0.5) / per_annulus);
        for (int a = 0; a < angles; ++a) {
          cplx w = bps[b] + std::polar(rho, 2 * pi * (a + 0.25) / angles);
          double r = std::pow(std::abs(map(w) - pz), beta);
          pts.push_back({w, b, r});
        }
      }
  }
  return pts;
}

// |zeta|^{1-beta} |Gamma^zeta_{zeta zeta} + (1 - beta)/zeta| near each marked
// point, in the affine chart zeta = z - p (potential jets in z).
inline DecayFit christoffel_decay_scan(const GeometrySpec& spec, const ConeParams& p, int annuli = 10) {
  spec.validate(p);
  auto marked = spec.marked_points();
  std::vector<double> rs, vals;
  for (const auto& pm : marked)
    for (int j = 0; j < annuli; ++j)
      for (int q = 0; q < 3; ++q)
        for (int a = 0; a < 12; ++a) {
          // dyadic in |zeta|^beta
          double mod = std::pow(std::pow(0.5, j + (q + 0.5) / 3) * 0.5, 1 / p.beta);
          cplx zeta = std::polar(mod, 2 * pi * (a + 0.25) / 12);
          cplx z = pm + zeta;
          using J = Jet<2, 3>;
          auto Z = J::variable(0, z), Zc = J::variable(1, std::conj(z));
          J P(1.0);
          for (const auto& m : marked) P = P * (Z - m);
          auto logP = log(P);
          auto lq = log(1.0 + Z * Zc);
          auto L = logP + conj_pairs(logP) - double(spec.k) * lq;
          L = L - cplx(0, L.value().imag());
          auto pot = 2.0 * lq + p.lambda * exp(p.beta * L);
          auto g = pot.d(0).d(1);
          cplx gamma = g.derivative({1, 0}) / g.value();
          double v = std::pow(mod, 1 - p.beta) * std::abs(gamma + (1 - p.beta) / zeta);
          rs.push_back(std::pow(mod, p.beta));
          vals.push_back(v);
        }
  FitOptions opt;
  opt.radius = 1.0;
  opt.drop_inner = 1;
  opt.min_annuli = 5;
  opt.scale = "|z_n|";
  opt.threshold = 0;
  auto fit = fit_decay("weighted Christoffel remainder", rs, vals, opt);
  fit.pass = fit.exponent > 0;
  return fit;
}

// Annulus scan of |R|_g = |K| of omega around the cone points.
inline DecayFit sphere_curvature_scan(const SphereBackground& bg) {
  CoverMap map(bg.spec.marked_points());
  auto pts = ring_points(map, bg.params.beta);
  std::vector<double> rs, vals;
  for (const auto& pt : pts) {
    auto j = detail::sphere_point_jets<4>(map, bg.spec, bg.params, pt.w);
    auto G = j.G0 + bg.params.lambda * j.phi.d(0).d(1);
    double K = (-(log(G).d(0).d(1)).value() / G.value()).real();
    rs.push_back(pt.r);
    vals.push_back(std::abs(K));
  }
  FitOptions opt;
  opt.radius = 1.0;
  opt.drop_inner = 1;
  opt.min_annuli = 5;
  opt.scale = "|z_n|";
  opt.threshold = -0.05;
  return fit_decay("|R|_g", rs, vals, opt);
}

// ---------------------------------------------------------------------------
// cone_torus local model

// rho and its Wirtinger derivatives at (z, zeta).
struct RhoJet {
  double rho;
  cplx rz, rzeta;               // d_z rho, d_zeta rho
  double rzz, rzetazeta;        // d_z dbar_z rho, d_zeta dbar_zeta rho
  cplx rzzeta;                  // d_z dbar_zeta rho
};

class ConeTorusModel {
 public:
  ConeTorusModel(const GeometrySpec& spec, const ConeParams& p) : spec_(spec), p_(p) {
    spec.validate(p);
    if (spec.variant != Variant::cone_torus) throw ValidationError("cone torus model needs cone_torus");
  }

  const ConeParams& params() const { return p_; }
  const GeometrySpec& spec() const { return spec_; }

  // Closed-form derivatives of rho = exp(Q).
  RhoJet rho(cplx z, cplx zeta) const {
    const auto& c = spec_.rho;
    double x = z.real(), y = z.imag();
    double cx = std::cos(x), sx = std::sin(x);
    double im = zeta.imag();
    double Q = c[0] * cx + c[1] * std::sin(y) + c[2] * zeta.real() + c[3] * im * cx + c[4] * std::norm(zeta);
    double Qx = -c[0] * sx - c[3] * im * sx, Qy = c[1] * std::cos(y);
    cplx Qz = 0.5 * cplx(Qx, -Qy);
    double Qzz = 0.25 * (-c[0] * cx - c[3] * im * cx - c[1] * std::sin(y));
    cplx Qzeta = 0.5 * c[2] - 0.5 * I * c[3] * cx + c[4] * std::conj(zeta);
    double Qzetazeta = c[4];
    cplx Qzzeta = -0.25 * I * c[3] * sx;  // d_z of Q_zetabar = c2/2 + (i/2) c3 cos x + c4 zeta
    RhoJet r;
    r.rho = std::exp(Q);
    r.rz = r.rho * Qz;
    r.rzeta = r.rho * Qzeta;
    r.rzz = r.rho * (Qzz + std::norm(Qz));
    r.rzetazeta = r.rho * (Qzetazeta + std::norm(Qzeta));
    r.rzzeta = r.rho * (Qzzeta + Qz * std::conj(Qzeta));
    return r;
  }

  // omega in (z, zeta) coordinates from the expanded form
  //   omega_0 + lambda [ |zeta|^{2b} i ddbar rho + b |zeta|^{2b-2} i (zeta d rho ^ dzetabar + conj)
  //                      + b^2 rho |zeta|^{2b-2} i dzeta ^ dzetabar ].
  // Returns (g_{z zbar}, g_{z zetabar}, g_{zeta zetabar}).
  std::array<cplx, 3> metric_expanded(cplx z, cplx zeta) const {
    double b = p_.beta, lam = p_.lambda;
    double m2 = std::norm(zeta);
    double f = std::pow(m2, b);            // |zeta|^{2b}
    double f1 = b * std::pow(m2, b - 1);   // b |zeta|^{2b-2}
    auto r = rho(z, zeta);
    cplx gzz = 1.0 + lam * f * r.rzz;
    cplx gzw = lam * (f * r.rzzeta + r.rz * f1 * zeta);
    cplx gww = 1.0 + lam * (f * r.rzetazeta + 2 * f1 * (zeta * r.rzeta).real() + b * f1 * r.rho);
    return {gzz, gzw, gww};
  }

  // Potential |z|^2 + |zeta|^2 + lambda rho |zeta|^{2b} as a jet in (z, zeta).
  template <int K>
  Jet<4, K> potential_zeta(cplx z, cplx zeta) const {
    using J = Jet<4, K>;
    auto Z = J::variable(0, z), Zc = J::variable(1, std::conj(z));
    auto W = J::variable(2, zeta), Wc = J::variable(3, std::conj(zeta));
    auto lw = log(W);
    auto lwc = conj_pairs(lw);
    auto mod2b = exp(p_.beta * (lw + lwc - cplx(0, (lw + lwc).value().imag())));
    return Z * Zc + W * Wc + p_.lambda * exp(log_rho<K>(Z, Zc, W, Wc)) * mod2b;
  }

  // Potential in Psi coordinates (z, w) with zeta = w^{1/b} on the sector
  // |arg w| <= pi b: |z|^2 + |w|^{2/b} + lambda rho(z, w^{1/b}) |w|^2.
  template <int K>
  Jet<4, K> potential_psi(cplx z, cplx w) const {
    using J = Jet<4, K>;
    auto Z = J::variable(0, z), Zc = J::variable(1, std::conj(z));
    auto W = J::variable(2, w), Wc = J::variable(3, std::conj(w));
    auto lw = log(W);
    auto lwc = conj_pairs(lw);
    auto zeta = exp(lw / p_.beta), zetac = exp(lwc / p_.beta);
    auto sum = lw + lwc - cplx(0, (lw + lwc).value().imag());
    return Z * Zc + exp(sum / p_.beta) + p_.lambda * exp(log_rho<K>(Z, Zc, zeta, zetac)) * W * Wc;
  }

  // Metric in (z, zeta) coordinates assembled as i ddbar of the potential jet.
  std::array<cplx, 3> metric_assembled(cplx z, cplx zeta) const {
    auto phi = potential_zeta<2>(z, zeta);
    return {phi.derivative({1, 1, 0, 0}), phi.derivative({1, 0, 0, 1}), phi.derivative({0, 0, 1, 1})};
  }

  // Edge frame e1 = d_z, e2 = (|zeta|^{1-b}/b) d_zeta on the xi-grid.
  MetricField edge_metric(const ConeGrid& g, bool reference = false) const {
    MetricField m;
    m.n = 2;
    m.frame = Frame::edge;
    m.g11.resize(g.size());
    m.g22.resize(g.size());
    m.g12.resize(g.size());
    double b = p_.beta;
    for (int i = 0; i < g.n_r; ++i) {
      double r = g.r(i);
      double mod = std::pow(r, 1 / b);
      double w1 = std::pow(mod, 1 - b) / b;
      for (int j = 0; j < g.n_theta; ++j) {
        cplx zeta = std::polar(mod, g.theta(j));
        for (int a = 0; a < std::max(g.n_tan, 1); ++a)
          for (int c = 0; c < std::max(g.n_tan, 1); ++c) {
            std::size_t k = g.index(i, j, a, c);
            if (reference) {
              m.g11[k] = 1;
              m.g12[k] = 0;
              m.g22[k] = w1 * w1;
              continue;
            }
            cplx z(g.tan(a), g.tan(c));
            auto e = metric_expanded(z, zeta);
            m.g11[k] = e[0].real();
            m.g12[k] = e[1] * w1;
            m.g22[k] = e[2].real() * w1 * w1;
          }
      }
    }
    return m;
  }

  // F = F_0 - log(|s|_h^{2-2b} omega^2/omega_0^2) with the closed-form
  // F_0 = (1/b - 1) log rho, i.e. F = -log(b^2 det g_edge).
  Field ricci_potential(const ConeGrid& g, const MetricField& m) const {
    Field F(g, Frame::xi, true);
    double b2 = p_.beta * p_.beta;
    for (std::size_t k = 0; k < g.size(); ++k) F.values[k] = -std::log(b2 * m.det(k));
    return F;
  }

  CurvaturePoint<2> curvature_psi(cplx z, cplx w) const { return curvature_from_potential<2>(potential_psi<5>(z, w)); }

 private:
  template <int K>
  Jet<4, K> log_rho(const Jet<4, K>& Z, const Jet<4, K>& Zc, const Jet<4, K>& W, const Jet<4, K>& Wc) const {
    const auto& c = spec_.rho;
    auto x = 0.5 * (Z + Zc);
    auto y = (Z - Zc) * cplx(0, -0.5);
    auto re = 0.5 * (W + Wc);
    auto im = (W - Wc) * cplx(0, -0.5);
    return c[0] * cos(x) + c[1] * sin(y) + c[2] * re + c[3] * im * cos(x) + c[4] * W * Wc;
  }

  GeometrySpec spec_;
  ConeParams p_;
};

// Points of the Psi sector |arg w| <= pi b over dyadic annuli in |w| = |z_n|,
// at a few tangential points.
struct PsiPoint {
  cplx z, w;
};

inline std::vector<PsiPoint> psi_scan_points(double beta, int annuli = 10, double outer = 0.5, int per_annulus = 3,
                                             int angles = 6, int tangential = 3) {
  std::vector<PsiPoint> pts;
  for (int j = 0; j < annuli; ++j)
    for (int q = 0; q < per_annulus; ++q) {
      double m = outer * std::pow(0.5, j + (q + 0.5) / per_annulus);
      for (int a = 0; a < angles; ++a) {
        double arg_zeta = -pi + 2 * pi * (a + 0.5) / angles;
        cplx w = std::polar(m, beta * arg_zeta);
        for (int t = 0; t < tangential; ++t) {
          double x = 2 * pi * (t + 0.3) / tangential;
          pts.push_back({cplx(x, 0.7 * x), w});
        }
      }
    }
  return pts;
}

struct CurvatureScan {
  DecayFit R, DR, Ric;
  double symmetry_error = 0;
  double dr_example_threshold = 0;  // envelope of the largest negative exponent alone
};

// |z_n| where the cone part lambda b^2 |z_n|^0 of g(w,wb) meets the flat part
// |z_n|^{2/b-2}/b^2; the curvature peaks just inside, so decay scans start
// well below it.
inline double crossover_radius(const ConeParams& p) {
  double b = p.beta;
  return std::pow(p.lambda * b * b * b * b, 1 / (2 / b - 2));
}
inline double asymptotic_outer_radius(const ConeParams& p) { return std::min(0.5, crossover_radius(p) / 16); }

inline double dr_envelope(double beta) { return std::min({0.0, 1 / beta - 3, 2 / beta - 5}); }

// |R|_g, |DR|_g and |Ric|_g of omega over dyadic annuli in |z_n|.
inline CurvatureScan curvature_derivative_scan(const ConeTorusModel& model, int annuli = 12) {
  double b = model.params().beta;
  auto pts = psi_scan_points(b, annuli, asymptotic_outer_radius(model.params()));
  std::vector<double> rs, vr, vd, vric;
  CurvatureScan out;
  for (const auto& pt : pts) {
    auto c = model.curvature_psi(pt.z, pt.w);
    rs.push_back(std::abs(pt.w));
    vr.push_back(c.norm_R);
    vd.push_back(c.norm_DR);
    vric.push_back(c.norm_Ric);
    out.symmetry_error = std::max(out.symmetry_error, c.symmetry_error);
  }
  FitOptions opt;
  opt.radius = 1.0;
  opt.drop_inner = 1;
  opt.min_annuli = 5;
  opt.scale = "|z_n|";
  opt.threshold = -0.05;
  out.R = fit_decay("|R|_g", rs, vr, opt);
  out.Ric = fit_decay("|Ric|_g", rs, vric, opt);
  opt.threshold = dr_envelope(b) - 0.2;
  out.DR = fit_decay("|DR|_g", rs, vd, opt);
  out.dr_example_threshold = std::min(0.0, 2 / b - 5) - 0.2;
  return out;
}

// Envelope scans of first and second derivatives of Psi^* g. Index 0 is the
// tangential coordinate z, index 1 is z_n = w.
struct EnvelopeEntry {
  std::string name;
  double envelope;  // smallest power of |z_n| in the bound
  DecayFit fit;
};

inline std::vector<EnvelopeEntry> metric_envelope_scan(const ConeTorusModel& model, int annuli = 12) {
  double b = model.params().beta;
  struct Spec {
    std::string name;
    double env;
    // derivative slots (z=0, zbar=1, w=2, wbar=3) and components (i, j) of g_{i jbar}
    std::vector<std::array<int, 4>> derivs;
    std::vector<std::array<int, 2>> comps;
  };
  using D = std::array<int, 4>;
  std::vector<Spec> specs = {
      {"d_z g(z,zb)", 0, {D{1, 0, 0, 0}}, {{0, 0}}},
      {"d_z g(w,zb)", std::min(1.0, 1 / b - 1), {D{1, 0, 0, 0}}, {{1, 0}}},
      {"d_z g(w,wb)", 0, {D{1, 0, 0, 0}}, {{1, 1}}},
      {"d_w g(w,zb)", 1 / b - 2, {D{0, 0, 1, 0}}, {{1, 0}}},
      {"d_w g(w,wb)", std::min(1 / b - 1, 2 / b - 3), {D{0, 0, 1, 0}}, {{1, 1}}},
      {"d_z d_zb g(z,zb)", 0, {D{1, 1, 0, 0}}, {{0, 0}}},
      {"d_z d_zb g(w,zb)", std::min(1.0, 1 / b - 1), {D{1, 1, 0, 0}}, {{1, 0}}},
      {"d_i d_jb g(w,wb)", 0, {D{1, 1, 0, 0}, D{1, 0, 0, 1}, D{0, 1, 1, 0}, D{0, 0, 1, 1}}, {{1, 1}}},
      {"d_w d_jb g(w,lb)", 1 / b - 2, {D{0, 1, 1, 0}, D{0, 0, 1, 1}}, {{1, 0}, {1, 1}}},
      {"d_z d_wb g(w,wb)", std::min(1 / b - 1, 2 / b - 3), {D{1, 0, 0, 1}}, {{1, 1}}},
      {"d_w d_wb g(w,wb)", 2 / b - 4, {D{0, 0, 1, 1}}, {{1, 1}}},
      {"d_w d_w g(w,zb)", 1 / b - 3, {D{0, 0, 2, 0}}, {{1, 0}}},
  };
  auto pts = psi_scan_points(b, annuli, asymptotic_outer_radius(model.params()));
  std::vector<double> rs;
  std::vector<std::vector<double>> vals(specs.size());
  for (const auto& pt : pts) {
    auto phi = model.potential_psi<4>(pt.z, pt.w);
    rs.push_back(std::abs(pt.w));
    for (std::size_t s = 0; s < specs.size(); ++s) {
      double sum = 0;
      for (const auto& d : specs[s].derivs)
        for (const auto& c : specs[s].comps) {
          std::array<int, 4> e = d;
          e[2 * c[0]] += 1;
          e[2 * c[1] + 1] += 1;
          sum += std::abs(phi.derivative(e));
        }
      vals[s].push_back(sum);
    }
  }
  std::vector<EnvelopeEntry> out;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    FitOptions opt;
    opt.radius = 1.0;
    opt.drop_inner = 1;
    opt.min_annuli = 5;
    opt.scale = "|z_n|";
    opt.threshold = specs[s].env - 0.2;
    out.push_back({specs[s].name, specs[s].env, fit_decay(specs[s].name, rs, vals[s], opt)});
  }
  return out;
}

}  // namespace edgeflat
