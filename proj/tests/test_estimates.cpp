#include <gtest/gtest.h>

#include "edgeflat/estimates.hpp"

using namespace edgeflat;

namespace {

struct CoverCase {
  SphereBackground bg;
  CoverProblem p;
  SolveState s;
  explicit CoverCase(int n) : bg(make(n)), p(bg), s(continuity_solve(p)) {}
  static SphereBackground make(int n) {
    GeometrySpec spec;
    spec.cover_n = n;
    return build_sphere_background(spec, ConeParams{});
  }
};

const CoverCase& cover48() {
  static const CoverCase c(48);
  return c;
}
const CoverCase& cover96() {
  static const CoverCase c(96);
  return c;
}

GeometrySpec torus_geometry() {
  GeometrySpec s;
  s.variant = Variant::cone_torus;
  return s;
}

ConeGrid cell_grid(int n_r = 64) {
  ConeGrid g;
  g.n_r = n_r;
  g.n_theta = 16;
  g.n_tan = 8;
  g.beta = ConeParams{}.beta;
  g.period = torus_geometry().period;
  return g;
}

// Geodesic distance on the unit sphere between two points of the affine chart.
double sphere_angle(cplx a, cplx b) {
  double chord = 2 * std::abs(a - b) / std::sqrt((1 + std::norm(a)) * (1 + std::norm(b)));
  return 2 * std::asin(std::min(1.0, chord / 2));
}

}  // namespace

TEST(RimClassifier, CellInnermostIsFirstRadius) {
  auto g = cell_grid(32);
  auto rims = cell_rims(g);
  EXPECT_EQ(rims.innermost, annulus_of(g.r(0), 1.0));
  EXPECT_FALSE(rims.off_rim(0));
  EXPECT_TRUE(rims.off_rim(g.size() - 1));
}

TEST(RimClassifier, CoverRimsMatchCurvatureExclusion) {
  const auto& c = cover48();
  EXPECT_EQ(cover_rims(c.bg).innermost, flat_curvature_residual(c.p, c.bg, c.s).innermost);
}

TEST(C0Bound, ZeroPotentialPasses) {
  const auto& c = cover48();
  std::vector<double> u(c.p.size(), 0.0);
  auto r = c0_check(c.bg, u);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.nodes.size(), 20u);
  EXPECT_EQ(r.oscillation, 0.0);
  EXPECT_NEAR(r.min_margin, r.bound, 1e-15);
}

TEST(C0Bound, GreenTermMatchesQuadrature) {
  const auto& c = cover48();
  GreensFunction G;
  cplx p(0.3, 0.2);
  double integral = 0;
  for (std::size_t k = 0; k < c.p.size(); ++k) integral += G(sphere_angle(c.bg.z[k], p)) * c.bg.G0[k];
  integral *= c.bg.weight();
  auto r = c0_check(c.bg, c.s.u, 20, G);
  EXPECT_NEAR(-integral, r.green_term, 1e-2 * r.green_term);
  EXPECT_NEAR(r.green_term, 2.0, 1e-4);
}

TEST(C0Bound, SolvedStatePassesAndScaledStateFails) {
  const auto& c = cover48();
  auto r = c0_check(c.bg, c.s.u);
  EXPECT_TRUE(r.pass);
  EXPECT_GT(r.oscillation, 0.1);
  std::vector<double> big(c.s.u);
  for (auto& x : big) x *= 1e3;
  EXPECT_FALSE(c0_check(c.bg, big).pass);
  EXPECT_THROW(c0_check(c.bg, c.s.u, 0), ValidationError);
}

TEST(C0Bound, OscillationStableUnderRefinement) {
  double a = c0_check(cover48().bg, cover48().s.u).oscillation;
  double b = c0_check(cover96().bg, cover96().s.u).oscillation;
  EXPECT_TRUE(refinement_check("osc", a, b, 0.10).pass);
}

TEST(Barrier, CoverSmallEpsilonPassesLargeFails) {
  const auto& c = cover48();
  auto small = barrier_check(c.bg, c.bg.params.eps());
  EXPECT_TRUE(small.pass);
  EXPECT_NEAR(barrier_check(c.bg, 0.0).min_eigenvalue, 1.0, 1e-15);
  EXPECT_FALSE(barrier_check(c.bg, 10.0).pass);
}

TEST(Barrier, ConeModelSmallEpsilonPassesLargeFails) {
  ConeParams prm;
  ConeTorusModel model(torus_geometry(), prm);
  auto g = cell_grid(32);
  EXPECT_TRUE(barrier_check(model, g, prm.eps()).pass);
  EXPECT_NEAR(barrier_check(model, g, 0.0).min_eigenvalue, 1.0, 1e-12);
  EXPECT_FALSE(barrier_check(model, g, 10.0).pass);
}

TEST(LaplacianBound, ZeroPotentialPeaksAwayFromCone) {
  const auto& c = cover48();
  std::vector<double> u(c.p.size(), 0.0);
  auto r = laplacian_bound_check(c.p, c.bg, u, 1, 1, c.bg.params.eps());
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.laplacian_max, 0.0);
  EXPECT_NEAR(r.a1, 1.0, 1e-15);
  EXPECT_NEAR(r.a2, 1.0, 1e-15);
}

TEST(LaplacianBound, WindowStableUnderRefinement) {
  const auto& a = cover48();
  const auto& b = cover96();
  ConeParams prm;
  auto ra = laplacian_bound_check(a.p, a.bg, a.s.u, 1, prm.kappa, prm.eps());
  auto rb = laplacian_bound_check(b.p, b.bg, b.s.u, 1, prm.kappa, prm.eps());
  EXPECT_GT(ra.a1, 0.0);
  EXPECT_TRUE(refinement_check("a1", ra.a1, rb.a1, 0.05).pass);
  EXPECT_TRUE(refinement_check("a2", ra.a2, rb.a2, 0.05).pass);
  EXPECT_NEAR(ra.laplacian_max + 1, ra.a2, 1e-12);
}

// The barrier moves the peak a small but fixed distance off the cone point;
// the grid has to resolve that radius for the check to see it.
TEST(LaplacianBound, BarrierMovesPeakOffConeWhenResolved) {
  CoverCase c(576);
  ConeParams prm;
  auto with = laplacian_bound_check(c.p, c.bg, c.s.u, 1, prm.kappa, prm.eps());
  auto without = laplacian_bound_check(c.p, c.bg, c.s.u, 1, 0.0, prm.eps());
  EXPECT_TRUE(with.pass);
  EXPECT_FALSE(without.pass);
  EXPECT_TRUE(with.peak_moved);
}

TEST(LaplacianBound, CellManufacturedState) {
  ConeParams prm;
  ConeTorusModel model(torus_geometry(), prm);
  auto mc = make_manufactured_cell(torus_geometry(), prm, cell_grid(32));
  double L = laplacian_weight(model);
  EXPECT_GE(L, 1.0);
  EXPECT_GE(L + min_bisectional_curvature(model), 2.0 - 1e-12);
  auto r = laplacian_bound_check(mc.problem, model, mc.u_star, L, prm.kappa, prm.eps());
  EXPECT_GT(r.a1, 0.0);
  EXPECT_LT(r.a2, 10.0);
}

TEST(Sobolev, ConstantRatioIsInverseRootVolume) {
  const auto& c = cover48();
  double vol = 0;
  for (double v : c.p.volume()) vol += v;
  std::vector<double> one(c.p.size(), 1.0);
  EXPECT_NEAR(sobolev_ratio(c.p, one), std::sqrt(vol) / vol, 1e-14);
  auto b = cover_bump(c.bg, {0, 0.0, 0.3, 0, 0});
  auto b3 = b;
  for (auto& x : b3) x *= 3;
  EXPECT_NEAR(sobolev_ratio(c.p, b3), sobolev_ratio(c.p, b), 1e-14);
}

TEST(Sobolev, TrialsDeterministicPerSeed) {
  auto a = sobolev_trials(20, 5), b = sobolev_trials(20, 5), d = sobolev_trials(20, 6);
  int radial = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].centre, b[k].centre);
    EXPECT_EQ(a[k].sigma, b[k].sigma);
    if (a[k].centre == 0.0) ++radial;
    else EXPECT_GT(std::abs(a[k].centre), a[k].sigma);  // support avoids the cone point
  }
  EXPECT_GT(radial, 0);
  EXPECT_NE(a[0].sigma, d[0].sigma);
}

TEST(Sobolev, MaxRatioStableAndSpikeBelowCorpusMax) {
  auto a = sobolev_ratio_check(cover48().p, cover48().bg, 100, 1);
  auto b = sobolev_ratio_check(cover96().p, cover96().bg, 100, 1);
  EXPECT_TRUE(refinement_check("sobolev", a.max_ratio, b.max_ratio, 0.10).pass);
  const auto& c = cover96();
  for (int m = 0; m < 3; ++m) {
    double spike = sobolev_ratio(c.p, cover_bump(c.bg, {m, 0.0, 0.12, 0, 0}));
    EXPECT_LT(spike, b.max_ratio) << m;
  }
}

TEST(Sobolev, CellConstantRatio) {
  auto mc = make_manufactured_cell(torus_geometry(), ConeParams{}, cell_grid(32));
  double vol = 0;
  for (double v : mc.problem.volume()) vol += v;
  std::vector<double> one(mc.problem.size(), 1.0);
  EXPECT_NEAR(sobolev_ratio(mc.problem, one), std::sqrt(vol) / vol, 1e-14);
  auto r = sobolev_ratio_check(mc.problem, 20, 3);
  EXPECT_GT(r.max_ratio, 0.0);
  EXPECT_TRUE(std::isfinite(r.max_ratio));
}

TEST(ThirdOrder, ZeroPotentialGivesZero) {
  const auto& c = cover48();
  std::vector<double> u(c.p.size(), 0.0);
  auto r = third_order_check(c.p, c.bg, u, 1);
  for (double s : r.S) EXPECT_EQ(s, 0.0);
  EXPECT_TRUE(r.covariant_b.exact_zero);
}

// S is quadratic in u to leading order: S(eps u) / eps^2 -> |T|^2 / G^3.
TEST(ThirdOrder, QuadraticScaling) {
  const auto& c = cover48();
  auto scaled = [&](double e) {
    std::vector<double> u(c.s.u);
    for (auto& x : u) x *= e;
    return third_order_check(c.p, c.bg, u, 1).S;
  };
  auto s1 = scaled(1e-7), s2 = scaled(2e-7);
  std::size_t k = locate_peak(s1, cover_rims(c.bg)).node;
  EXPECT_NEAR(s2[k] / s1[k], 4.0, 1e-4);
}

TEST(ThirdOrder, UnresolvedPotentialRejected) {
  const auto& c = cover48();
  std::vector<double> u(c.p.size());
  std::mt19937_64 rng(2);
  for (auto& x : u) x = 1e-3 * (double(rng() >> 11) * 0x1.0p-53 - 0.5);
  EXPECT_THROW(third_order_check(c.p, c.bg, u, 1), ResolutionError);
}

TEST(ThirdOrder, SolvedStateMaximaAndDecay) {
  const auto& a = cover48();
  const auto& b = cover96();
  auto ra = third_order_check(a.p, a.bg, a.s.u, 1);
  auto rb = third_order_check(b.p, b.bg, b.s.u, 1);
  EXPECT_TRUE(ra.S_peak.off_rim);
  EXPECT_TRUE(refinement_check("S", ra.S_peak.value, rb.S_peak.value, 0.10).pass);
  EXPECT_TRUE(refinement_check("Q", ra.Q_peak.value, rb.Q_peak.value, 0.10).pass);
  EXPECT_TRUE(rb.covariant_b.pass) << rb.covariant_b.exponent;
  EXPECT_TRUE(rb.s_holder.pass) << rb.s_holder.exponent;
  EXPECT_GE(rb.covariant_b.exponent, ConeParams{}.alpha * ConeParams{}.beta - 0.1);
}

TEST(ThirdOrder, QPeakOffRimWhenResolved) {
  CoverCase c(288);
  auto r = third_order_check(c.p, c.bg, c.s.u, 1);
  EXPECT_TRUE(r.Q_peak.off_rim);
  EXPECT_TRUE(r.S_peak.off_rim);
}

TEST(Lipschitz, ZeroPotential) {
  auto mc = make_manufactured_cell(torus_geometry(), ConeParams{}, cell_grid());
  std::vector<double> u(mc.problem.size(), 0.0);
  auto r = lipschitz_second_derivative_check(mc.problem, u, ConeParams{});
  EXPECT_EQ(r.phi, 0.0);
  EXPECT_EQ(r.psi, 0.0);
  EXPECT_EQ(r.chi, 0.0);
  EXPECT_TRUE(r.psi_decay.exact_zero);
}

TEST(Lipschitz, ManufacturedPsiDecay) {
  ConeParams prm;
  auto mc = make_manufactured_cell(torus_geometry(), prm, cell_grid());
  auto r = lipschitz_second_derivative_check(mc.problem, mc.u_star, prm);
  EXPECT_TRUE(r.psi_decay.pass);
  EXPECT_GE(r.psi_decay.exponent, prm.beta - 0.1);
  EXPECT_GT(r.psi, 0.0);
  EXPECT_TRUE(std::isfinite(r.phi) && std::isfinite(r.chi));
  auto fine = make_manufactured_cell(torus_geometry(), prm, cell_grid(128));
  auto rf = lipschitz_second_derivative_check(fine.problem, fine.u_star, prm);
  EXPECT_TRUE(refinement_check("psi", r.psi, rf.psi, 0.25).pass) << r.psi << " " << rf.psi;
}

TEST(FinalCurvature, CoverSolvedStateIsFlat) {
  const auto& c = cover48();
  auto r = final_curvature_check(c.p, c.bg, c.s);
  EXPECT_TRUE(r.pass) << r.residual;
  SolveState half = c.s;
  half.t = 0.5;
  EXPECT_THROW(final_curvature_check(c.p, c.bg, half), ValidationError);
  SolveState trivial = initial_state(c.p);
  trivial.t = 1;
  EXPECT_FALSE(final_curvature_check(c.p, c.bg, trivial).pass);
}

TEST(FinalCurvature, CellManufacturedState) {
  auto mc = make_manufactured_cell(torus_geometry(), ConeParams{}, cell_grid(32));
  SolveState s = initial_state(mc.problem);
  s.t = 1;
  s.u = mc.u_star;
  EXPECT_TRUE(final_curvature_check(mc.problem, s).pass);
  for (std::size_t k = 0; k < s.u.size(); ++k) s.u[k] *= 1.1;
  EXPECT_FALSE(final_curvature_check(mc.problem, s).pass);
}

TEST(Moser, IdentityAndBounds) {
  const auto& c = cover48();
  double N = c0_check(c.bg, c.s.u).bound + 1;
  auto r = moser_check(c.p, c.s, N);
  EXPECT_TRUE(r.pass);
  EXPECT_GE(r.min_gap, 1.0);
  EXPECT_LT(r.identity_error, 1e-8);
  EXPECT_GT(r.energy, 0.0);
  SolveState zero = initial_state(c.p);
  auto z = moser_check(c.p, zero, 2.0);
  EXPECT_EQ(z.energy, 0.0);
  EXPECT_TRUE(z.pass);
}

TEST(AppendixDecay, CorpusPasses) {
  ConeParams prm;
  auto corpus = holder_corpus(prm.alpha);
  ConeGrid g;
  g.n_r = 4096;
  g.n_theta = 16;
  g.beta = prm.beta;
  for (int i = 0; i < 6; ++i) {
    auto fit = appendix_decay_check(corpus_field(g, corpus[i]), prm);
    EXPECT_TRUE(fit.pass) << corpus[i].id << " " << fit.exponent;
    EXPECT_FALSE(fit.exact_zero) << corpus[i].id;
  }
}

TEST(AppendixDecay, ConstantsAndQuadraticsVanish) {
  ConeParams prm;
  ConeGrid g;
  g.n_r = 1024;
  g.n_theta = 16;
  g.beta = prm.beta;
  auto one = sample(g, [](double, double, double, double) { return cplx(1.0); });
  auto fit = appendix_decay_check(one, prm);
  EXPECT_TRUE(fit.exact_zero);
  EXPECT_TRUE(fit.pass);
}

TEST(AppendixDecay, DiscontinuousDataFails) {
  ConeParams prm;
  ConeGrid g;
  g.n_r = 4096;
  g.n_theta = 16;
  g.beta = prm.beta;
  auto f = sample(g, [](double r, double t, double, double) { return cplx(std::max(0.0, 1 - 2 * r) * std::cos(t)); });
  EXPECT_FALSE(appendix_decay_check(f, prm).pass);
}

TEST(AppendixDecay, HypothesisGate) {
  ConeParams prm;
  prm.beta = 0.45;
  prm.alpha = 0.5;
  ConeGrid g;
  g.n_r = 256;
  g.n_theta = 8;
  g.beta = prm.beta;
  auto one = sample(g, [](double, double, double, double) { return cplx(1.0); });
  EXPECT_THROW(appendix_decay_check(one, prm), HypothesisError);
  prm.beta = 1.0 / 3;
  EXPECT_THROW(appendix_decay_check(one, prm), ValidationError);
}

TEST(Refinement, RelativeChange) {
  auto c = refinement_check("x", 1.0, 1.04, 0.05);
  EXPECT_NEAR(c.change, 0.04 / 1.04, 1e-15);
  EXPECT_TRUE(c.pass);
  EXPECT_FALSE(refinement_check("x", 1.0, 1.2, 0.05).pass);
  EXPECT_TRUE(refinement_check("x", 0.0, 0.0, 0.05).pass);
}

TEST(CoverEstimates, Aggregate) {
  auto a = cover_estimates(cover48().p, cover48().bg, cover48().s);
  auto b = cover_estimates(cover96().p, cover96().bg, cover96().s);
  auto cmp = compare_cover_estimates(a, b);
  EXPECT_EQ(cmp.checks.size(), 6u);
  for (const auto& c : cmp.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.change;
  EXPECT_TRUE(cmp.coarse.c0.pass);
  EXPECT_TRUE(cmp.coarse.moser.pass);
  EXPECT_TRUE(cmp.coarse.curvature.pass);
}
