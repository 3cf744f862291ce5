#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "edgeflat/model_poisson.hpp"
#include "edgeflat/sphere.hpp"

using namespace edgeflat;

namespace {
ConeGrid disk(double beta, int nr, int nt = 16, int ntan = 0) {
  ConeGrid g;
  g.beta = beta;
  g.n_r = nr;
  g.n_theta = nt;
  g.n_tan = ntan;
  return g;
}
}  // namespace

TEST(ModelPoisson, ConstantRightHandSide) {
  for (int ntan : {0, 4}) {
    auto g = disk(0.3, 32, 8, ntan);
    auto f = sample(g, [](double, double, double, double) { return cplx(1.0); });
    auto res = solve_model_poisson(f);
    for (int i = 0; i < g.n_r; ++i)
      EXPECT_NEAR(res.v.values[g.index(i, 3, ntan ? 1 : 0, 0)].real(), g.r(i) * g.r(i) - 1, 1e-12);
  }
}

TEST(ModelPoisson, ZeroDataGivesZero) {
  auto g = disk(0.3, 16);
  Field f(g, Frame::xi, true);
  auto res = solve_model_poisson(f);
  EXPECT_EQ(res.v.max_abs(), 0.0);
}

TEST(ModelPoisson, IndicialBoundaryMode) {
  // beta = 1/3 makes r^{1/beta} = r^3 polynomial, so the solve is exact.
  auto g = disk(1.0 / 3, 32);
  Field f(g, Frame::xi, false);
  std::vector<cplx> bd(g.slice());
  for (int j = 0; j < g.n_theta; ++j) bd[j] = std::polar(1.0, g.theta(j));
  auto res = solve_model_poisson(f, bd);
  double err = 0;
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j)
      err = std::max(err, std::abs(res.v.values[g.index(i, j)] - std::pow(g.r(i), 3.0) * std::polar(1.0, g.theta(j))));
  EXPECT_LT(err, 1e-12);
  // Non-integer exponent: bounded branch r^{1/0.3} to discretization accuracy.
  auto h = disk(0.3, 128);
  Field f2(h, Frame::xi, false);
  std::vector<cplx> bd2(h.slice());
  for (int j = 0; j < h.n_theta; ++j) bd2[j] = std::polar(1.0, h.theta(j));
  auto r2 = solve_model_poisson(f2, bd2);
  double e2 = 0;
  for (int i = 0; i < h.n_r; ++i)
    e2 = std::max(e2, std::abs(r2.v.values[h.index(i, 0)] - std::pow(h.r(i), 1 / 0.3)));
  EXPECT_LT(e2, 1e-6);
}

TEST(ModelPoisson, ModeSolveEqualsFullSolve) {
  auto g = disk(0.35, 8, 8, 4);
  g.period = 3.0;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  // smooth band-limited rhs
  auto f = sample(g, [&](double r, double t, double x, double y) {
    return cplx(std::exp(-r * r) * (1 + r * std::cos(t) + r * r * std::sin(2 * t)) *
                (1 + 0.3 * std::cos(2 * pi * x / 3) + 0.2 * std::sin(2 * pi * y / 3)));
  });
  ModeSolver solver(g);
  auto v = solver.solve(f.values);
  // assemble the full discrete operator column by column
  int n = int(g.size());
  Eigen::MatrixXcd A(n, n);
  std::vector<cplx> e(n, 0.0), zero(g.slice(), 0.0);
  for (int k = 0; k < n; ++k) {
    e[k] = 1;
    auto col = solver.ops().laplacian(e, zero);
    for (int i = 0; i < n; ++i) A(i, k) = col[i];
    e[k] = 0;
  }
  Eigen::VectorXcd b(n);
  for (int i = 0; i < n; ++i) b[i] = f.values[i];
  Eigen::VectorXcd x = A.partialPivLu().solve(b);
  double err = 0;
  for (int i = 0; i < n; ++i) err = std::max(err, std::abs(x[i] - v[i]));
  EXPECT_LT(err, 1e-10);
}

TEST(ModelPoisson, MaximumPrinciple) {
  auto g = disk(0.25, 64, 16);
  auto f = sample(g, [](double r, double t, double, double) {
    return cplx(-std::exp(-4 * r * r) * (1.2 + std::cos(t)));
  });
  std::vector<cplx> bd(g.slice());
  for (int j = 0; j < g.n_theta; ++j) bd[j] = 0.5 + 0.4 * std::sin(g.theta(j));
  auto res = solve_model_poisson(f, bd);
  for (auto& x : res.v.values) EXPECT_GE(x.real(), 0.0);
}

TEST(Vanishing, ExplicitFields) {
  auto g = disk(1.0 / 3, 128);
  auto r2 = sample(g, [](double r, double, double, double) { return cplx(r * r); });
  auto fit = check_vanishing_at_cone(r2);
  EXPECT_TRUE(fit.pass);
  EXPECT_NEAR(fit.exponent, 1.0, 0.05);
  auto m1 = sample(g, [](double r, double t, double, double) { return r * r * r * std::polar(1.0, t); }, false);
  auto f1 = check_vanishing_at_cone(m1);
  EXPECT_TRUE(f1.pass);
  EXPECT_NEAR(f1.exponent, 2.0, 0.05);
  auto re = sample(g, [](double r, double t, double, double) { return cplx(r * std::cos(t)); });
  auto f2 = check_vanishing_at_cone(re);
  EXPECT_FALSE(f2.pass);
  EXPECT_NEAR(f2.limit, 0.5, 1e-9);
}

TEST(Vanishing, InsufficientAnnuli) {
  ConeGrid g = disk(1.0 / 3, 8);
  auto r2 = sample(g, [](double r, double, double, double) { return cplx(r * r); });
  EXPECT_THROW(check_vanishing_at_cone(r2), ResolutionError);
}

TEST(Vanishing, CorpusSolutionsAndMixedDerivative) {
  auto g = disk(1.0 / 3, 4096, 16);
  for (const auto& c : holder_corpus(0.5)) {
    auto res = solve_model_poisson(corpus_field(g, c));
    auto fit = check_vanishing_at_cone(res.v, c.id);
    EXPECT_TRUE(fit.pass) << c.id << " exponent " << fit.exponent << " limit " << fit.limit
                          << " tol " << fit.limit_tolerance;
  }
  auto t = disk(1.0 / 3, 4096, 16, 4);
  auto c = holder_corpus(0.5)[0];
  auto res = solve_model_poisson(corpus_field(t, c));
  ConeOps ops(t);
  Field vz(t, Frame::xi, false);
  vz.values = ops.d_z(res.v.values);
  EXPECT_TRUE(check_vanishing_at_cone(vz, "d_z v").pass);
}

TEST(Schauder, ZeroAndScaling) {
  auto g = disk(1.0 / 3, 32, 16, 4);
  Field zero(g, Frame::xi, true);
  EXPECT_THROW(schauder_ratio(zero, 0.5), ValidationError);
  auto c = holder_corpus(0.5)[0];
  auto a = schauder_ratio(corpus_field(g, c), 0.5);
  auto b = schauder_ratio(corpus_field(g, c, 10.0), 0.5);
  EXPECT_NEAR(a.ratio, b.ratio, 1e-10 * a.ratio);
  EXPECT_GT(a.ratio, 0);
}

TEST(Schauder, TentCosineIsFinite) {
  auto g = disk(1.0 / 3, 64, 16, 4);
  auto f = sample(g, [&](double r, double t, double x, double) {
    return cplx(std::max(0.0, 1 - 2 * r) * std::cos(t) * std::cos(2 * pi * x / g.period));
  });
  auto s = schauder_ratio(f, 0.5);
  EXPECT_TRUE(std::isfinite(s.ratio));
  EXPECT_GT(s.ratio, 0);
}

TEST(Schauder, CorpusMaximumStableUnderRefinement) {
  for (double beta : {1.0 / 3, 0.25}) {
    auto g = disk(beta, 64, 16, 4);
    double coarse = 0, fine = 0;
    for (const auto& c : holder_corpus(0.5)) {
      coarse = std::max(coarse, schauder_ratio(corpus_field(g, c), 0.5).ratio);
      fine = std::max(fine, schauder_ratio(corpus_field(g.refined(), c), 0.5).ratio);
    }
    EXPECT_LT(std::abs(fine - coarse), 0.1 * coarse) << beta;
  }
}

TEST(Green, ClosedFormAndNormalization) {
  GreensFunction G;
  EXPECT_NEAR(G.regular_part(), 1 / (2 * pi), 1e-6);
  // mean zero of the unshifted function on an independent grid
  SphereGrid sg{1024, 4};
  double mean = 0, area = 0;
  for (int i = 0; i < sg.n_phi; ++i) {
    double w = sg.weight(i) * sg.n_lambda;
    mean += w * G.unshifted(sg.phi(i));
    area += w;
  }
  EXPECT_NEAR(area, 4 * pi, 1e-12);
  EXPECT_NEAR(mean / area, 0.0, 1e-5);
  for (int i = 0; i < sg.n_phi; ++i) EXPECT_LT(G(sg.phi(i)), 0.0);
  EXPECT_LT(G(pi), 0.0);
  // -integral of the shifted function equals shift * Vol, close to 2
  EXPECT_NEAR(G.shift() * 4 * pi, 2.0, 1e-5);
}

TEST(Green, SymmetryAndRotation) {
  GreensFunction G;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 10; ++k) {
    double p1 = std::acos(1 - 2 * u(rng)), l1 = 2 * pi * u(rng);
    double p2 = std::acos(1 - 2 * u(rng)), l2 = 2 * pi * u(rng);
    EXPECT_NEAR(G(p1, l1, p2, l2), G(p2, l2, p1, l1), 1e-6);
  }
  // On a grid centred at p the sampled function has no longitude dependence.
  SphereGrid sg{64, 16};
  for (int i = 0; i < sg.n_phi; ++i) {
    double m = 0, m2 = 0;
    for (int j = 0; j < sg.n_lambda; ++j) {
      double v = G(0.0, 0.0, sg.phi(i), sg.lambda(j));
      m += v;
      m2 += v * v;
    }
    m /= sg.n_lambda;
    EXPECT_LT(m2 / sg.n_lambda - m * m, 1e-6);
  }
}

TEST(Green, DefiningEquationAwayFromPole) {
  GreensFunction G;
  SphereGrid sg{256, 8};
  std::vector<cplx> v(sg.size());
  for (int i = 0; i < sg.n_phi; ++i)
    for (int j = 0; j < sg.n_lambda; ++j) v[sg.index(i, j)] = G(sg.phi(i));
  auto lap = SphereOps(sg).laplacian(v);
  for (int i = 0; i < sg.n_phi; ++i) {
    if (sg.phi(i) < 0.5) continue;
    EXPECT_NEAR(lap[sg.index(i, 0)].real(), -1 / (4 * pi), 1e-6);
  }
}
