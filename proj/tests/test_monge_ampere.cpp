#include <gtest/gtest.h>

#include <random>

#include "edgeflat/monge_ampere.hpp"

using namespace edgeflat;

namespace {
SphereBackground sphere_background(int n = 48) {
  GeometrySpec s;
  s.cover_n = n;
  return build_sphere_background(s, ConeParams{});
}
ConeGrid small_cell() {
  ConeGrid g;
  g.n_r = 16;
  g.n_theta = 8;
  g.n_tan = 8;
  return g;
}
GeometrySpec torus_geometry() {
  GeometrySpec s;
  s.variant = Variant::cone_torus;
  return s;
}
double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}
}  // namespace

TEST(NormalizingConstant, TrivialCases) {
  std::vector<double> F = {0.3, -1.0, 2.0, 0.5}, vol = {1, 2, 3, 4};
  EXPECT_EQ(normalize_constant_c(F, 0.0, vol), 0.0);
  std::vector<double> Fc(4, 1.7);
  EXPECT_NEAR(normalize_constant_c(Fc, 0.4, vol), 0.4 * 1.7, 1e-15);
}

TEST(NormalizingConstant, StrictlyInsideBracket) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-3, 3), w(0.1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> F(200), vol(200);
    for (auto& f : F) f = u(rng);
    for (auto& v : vol) v = w(rng);
    double t = 0.05 * (trial + 1);
    double c = normalize_constant_c(F, t, vol);
    EXPECT_GT(c, t * *std::min_element(F.begin(), F.end()));
    EXPECT_LT(c, t * *std::max_element(F.begin(), F.end()));
  }
}

TEST(NormalizingConstant, RejectsNonFiniteQuadrature) {
  std::vector<double> F = {std::nan(""), 1.0}, vol = {1, 1};
  EXPECT_THROW(normalize_constant_c(F, 1.0, vol), SolverError);
}

TEST(CoverSolve, TrivialStateHasZeroResidual) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  auto s = initial_state(p);
  EXPECT_EQ(sup_norm(ma_residual(p, s)), 0.0);
}

TEST(CoverSolve, ManufacturedPotentialHasZeroResidual) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  auto s = initial_state(p);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto [a, b] = lattice_coords(bg.grid.node(k));
    s.u[k] = 0.01 * std::cos(2 * pi * a) * std::sin(2 * pi * b);
  }
  p.set_F(p.log_ratio(p.hat(s.u)));
  s.t = 1;
  s.c = normalize_constant_c(p.F(), 1, p.volume());
  EXPECT_LT(sup_norm(ma_residual(p, s)), 1e-12);
  // Newton at an exact solution leaves it unchanged.
  auto next = newton_step(p, s);
  EXPECT_LT(max_diff(next.u, s.u), 1e-12);
}

TEST(CoverSolve, OneNewtonStepIsExact) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  auto s = initial_state(p);
  s.t = 0.7;
  s.c = normalize_constant_c(p.F(), s.t, p.volume());
  auto next = newton_step(p, s);
  EXPECT_LT(sup_norm(ma_residual(p, next)), 1e-11);
  EXPECT_LT(max_diff(next.u, dim1_exact_solve(p, 0.7).u), 1e-10);
}

TEST(CoverSolve, ExactSolveTrivialCases) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  EXPECT_EQ(sup_norm(dim1_exact_solve(p, 0.0).u), 0.0);
  p.set_F(std::vector<double>(p.size(), 2.5));
  EXPECT_LT(sup_norm(dim1_exact_solve(p, 1.0).u), 1e-13);
}

TEST(CoverSolve, ContinuityMatchesExactSolve) {
  auto bg = sphere_background();
  CoverProblem p(bg);
  auto s = continuity_solve(p);
  EXPECT_EQ(s.t, 1.0);
  EXPECT_LT(sup_norm(ma_residual(p, s)), 1e-8);
  EXPECT_LT(max_diff(s.u, dim1_exact_solve(p, 1.0).u), 1e-8);
  EXPECT_LT(std::abs(s.normalization), 1e-10);
  for (const auto& r : s.steps) {
    EXPECT_LE(r.tF_min, r.c + 1e-14);
    EXPECT_GE(r.tF_max, r.c - 1e-14);
    EXPECT_GT(r.a1, 0.0);
    EXPECT_LT(r.volume_error, 1e-10);
  }
  ContinuityOptions one;
  one.t_grid = {1.0};
  EXPECT_LT(max_diff(continuity_solve(p, one).u, s.u), 1e-8);
}

TEST(CoverSolve, SolvedMetricIsFlatAwayFromConePoints) {
  auto bg = sphere_background();
  CoverProblem p(bg);
  auto s = continuity_solve(p);
  auto k = flat_curvature_residual(p, bg, s);
  EXPECT_LT(k.sup, 1e-5);
  // The background itself is far from flat, so the check is not vacuous.
  auto K0 = p.gaussian_curvature(p.background());
  EXPECT_GT(sup_norm(K0), 0.5);
}

TEST(CoverSolve, ContinuationUnderflowIsReported) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  ContinuityOptions opt;
  opt.max_newton = 0;
  opt.min_dt = 0.2;
  EXPECT_THROW(continuity_solve(p, opt), SolverError);
}

TEST(CoverSolve, NonPositiveMetricRejected) {
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  auto s = initial_state(p);
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto [a, b] = lattice_coords(bg.grid.node(k));
    s.u[k] = 10 * std::cos(2 * pi * a);
  }
  EXPECT_THROW(ma_residual(p, s), SolverError);
}

TEST(KernelDimension, ConstantsOnly) {
  auto flat = kernel_dimension_flat_torus(12);
  EXPECT_EQ(flat.dimension, 1);
  auto round = kernel_dimension_round_sphere(SphereGrid{16, 32});
  EXPECT_EQ(round.dimension, 1);
  EXPECT_GE(round.gap, 1e3);
  auto bg = sphere_background(24);
  CoverProblem p(bg);
  auto bgk = kernel_dimension(p, p.background());
  EXPECT_EQ(bgk.dimension, 1);
  EXPECT_GE(bgk.gap, 1e3);
  auto s = continuity_solve(p);
  auto hatk = kernel_dimension(p, p.hat(s.u));
  EXPECT_EQ(hatk.dimension, 1);
  EXPECT_GE(hatk.gap, 1e3);
}

TEST(KernelDimension, CountsAllNullDirections) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(5, 5);
  A(3, 3) = 0;
  A(4, 4) = 1e-12;
  auto r = kernel_dimension(A);
  EXPECT_EQ(r.dimension, 2);
}

TEST(EdgeHessian, PolynomialOracles) {
  auto g = small_cell();
  ConeOps ops(g);
  auto f1 = sample(g, [](double r, double, double, double) { return cplx(r * r - 1); });
  auto f2 = sample(g, [](double r, double, double x, double) { return cplx(std::cos(x) * (r * r - 1)); });
  std::vector<double> u1(g.size()), u2(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    u1[k] = f1.values[k].real();
    u2[k] = f2.values[k].real();
  }
  auto H1 = edge_hessian(ops, u1), H2 = edge_hessian(ops, u2);
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j)
      for (int a = 0; a < g.n_tan; ++a) {
        std::size_t k = g.index(i, j, a, 1);
        double r = g.r(i), x = g.tan(a);
        EXPECT_NEAR(H1.g22[k], 1.0, 1e-10);
        EXPECT_NEAR(H1.g11[k], 0.0, 1e-12);
        EXPECT_NEAR(std::abs(H1.g12[k]), 0.0, 1e-10);
        EXPECT_NEAR(H2.g11[k], -0.25 * std::cos(x) * (r * r - 1), 1e-12);
        cplx expect = -0.5 * r * std::sin(x) * std::polar(1.0, g.theta(j));
        EXPECT_NEAR(std::abs(H2.g12[k] - expect), 0.0, 1e-10);
      }
}

TEST(CellSolve, LinearizationMatchesDifferenceQuotient) {
  auto mc = make_manufactured_cell(torus_geometry(), ConeParams{}, small_cell());
  const auto& p = mc.problem;
  std::vector<double> v(p.size());
  auto vf = sample(p.grid(), [](double r, double t, double x, double y) {
    return cplx((1 - r * r) * r * r * (1 + 0.5 * std::cos(t) * r + 0.3 * std::sin(x + y)));
  });
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = vf.values[k].real();
  auto h = p.hat(mc.u_star);
  auto lin = p.laplacian(h, v);
  double eps = 1e-6;
  std::vector<double> up = mc.u_star, um = mc.u_star;
  for (std::size_t k = 0; k < v.size(); ++k) {
    up[k] += eps * v[k];
    um[k] -= eps * v[k];
  }
  auto lp = p.log_ratio(p.hat(up)), lm = p.log_ratio(p.hat(um));
  double err = 0, scale = sup_norm(lin);
  for (std::size_t k = 0; k < v.size(); ++k) err = std::max(err, std::abs((lp[k] - lm[k]) / (2 * eps) - lin[k]));
  EXPECT_LT(err, 1e-6 * scale);
}

TEST(CellSolve, ManufacturedSolutionRecovered) {
  auto mc = make_manufactured_cell(torus_geometry(), ConeParams{}, small_cell());
  const auto& p = mc.problem;
  SolveState exact;
  exact.t = 1;
  exact.u = mc.u_star;
  exact.c = normalize_constant_c(p.F(), 1, p.volume());
  EXPECT_LT(std::abs(exact.c), 1e-13);
  EXPECT_LT(sup_norm(ma_residual(p, exact)), 1e-13);
  auto s = continuity_solve(p);
  EXPECT_LT(max_diff(s.u, mc.u_star), 1e-6);
  double floor = newton_floor(p);
  EXPECT_GT(floor, 0.0);
  EXPECT_LT(floor, ContinuityOptions{}.newton_tol);
  auto q = quadratic_contraction(s.histories, 1e-2, floor_margin * floor);
  EXPECT_TRUE(q.pass) << "K = " << q.K;
  for (const auto& r : s.steps) {
    EXPECT_GT(r.a1, 0.0);
    EXPECT_LE(r.tF_min, r.c + 1e-14);
    EXPECT_GE(r.tF_max, r.c - 1e-14);
  }
}

TEST(NewtonDiagnostics, QuadraticContraction) {
  EXPECT_TRUE(quadratic_contraction({{1e-1, 5e-3, 2e-5, 3e-10}}).pass);
  // Linear convergence is not quadratic.
  EXPECT_FALSE(quadratic_contraction({{1e-3, 5e-4, 2.5e-4, 1.25e-4}}).pass);
  // A last step that lands on the stagnation floor says nothing about the rate.
  std::vector<std::vector<double>> stalled{{1.8e-1, 4.3e-6, 1.4e-10, 4.0e-11}};
  EXPECT_FALSE(quadratic_contraction(stalled).pass);
  EXPECT_TRUE(quadratic_contraction(stalled, 1e-2, floor_margin * 3.6e-11).pass);
  // The floor does not hide a linear tail above it.
  EXPECT_FALSE(quadratic_contraction({{1e-3, 5e-4, 2.5e-4, 1.25e-4}}, 1e-2, floor_margin * 3.6e-11).pass);
}
