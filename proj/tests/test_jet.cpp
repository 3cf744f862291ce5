#include <gtest/gtest.h>

#include "edgeflat/jet.hpp"

using namespace edgeflat;
using cplx = std::complex<double>;
using J = Jet<2, 5>;

TEST(Jet, PolynomialDerivatives) {
  // f = x^3 y^2 at (2, 3): d^2/dx dy = 3 x^2 * 2 y = 72
  auto x = J::variable(0, 2.0), y = J::variable(1, 3.0);
  auto f = x * x * x * y * y;
  EXPECT_NEAR(f.value().real(), 72.0, 1e-12);
  EXPECT_NEAR(f.derivative({1, 1}).real(), 72.0, 1e-12);
  EXPECT_NEAR(f.derivative({3, 2}).real(), 12.0, 1e-12);
  EXPECT_NEAR(f.derivative({2, 0}).real(), 6 * 2 * 9.0, 1e-12);
}

TEST(Jet, TranscendentalAgainstClosedForm) {
  double x0 = 0.7;
  auto x = J::variable(0, x0);
  auto e = exp(x), l = log(x), s = sin(x), c = cos(x), p = pow(x, 1.5);
  double f3 = 1 * 2 * 3;
  EXPECT_NEAR(e.derivative({3, 0}).real(), std::exp(x0), 1e-12);
  EXPECT_NEAR(l.derivative({3, 0}).real(), 2 / (x0 * x0 * x0), 1e-11);
  EXPECT_NEAR(s.derivative({3, 0}).real(), -std::cos(x0), 1e-12);
  EXPECT_NEAR(c.derivative({4, 0}).real(), std::cos(x0), 1e-12);
  EXPECT_NEAR(p.derivative({3, 0}).real(), 1.5 * 0.5 * -0.5 * std::pow(x0, -1.5), 1e-11);
  (void)f3;
}

TEST(Jet, DivisionAndChainRule) {
  auto x = J::variable(0, 0.3), y = J::variable(1, -0.4);
  auto f = exp(x * y) / (1.0 + x * x);
  // d/dx at point: y e^{xy}/(1+x^2) - 2x e^{xy}/(1+x^2)^2
  double X = 0.3, Y = -0.4, E = std::exp(X * Y), D = 1 + X * X;
  EXPECT_NEAR(f.derivative({1, 0}).real(), Y * E / D - 2 * X * E / (D * D), 1e-12);
  auto g = f.d(0);
  EXPECT_NEAR(g.value().real(), f.derivative({1, 0}).real(), 1e-13);
  EXPECT_NEAR(g.derivative({0, 1}).real(), f.derivative({1, 1}).real(), 1e-12);
}

TEST(Jet, WirtingerConjugatePairs) {
  // |z|^2 with z, zbar slots: d_z d_zbar = 1
  using W = Jet<2, 4>;
  cplx z0(0.2, 0.5);
  auto z = W::variable(0, z0), zb = W::variable(1, std::conj(z0));
  auto f = z * zb;
  EXPECT_NEAR(std::abs(f.derivative({1, 1}) - 1.0), 0, 1e-14);
  auto g = z * z * zb;
  auto gc = conj_pairs(g);
  // conj(z^2 zbar) = zbar^2 z
  EXPECT_NEAR(std::abs(gc.derivative({1, 2}) - 2.0), 0, 1e-14);
  EXPECT_NEAR(std::abs(gc.value() - std::conj(g.value())), 0, 1e-14);
}
