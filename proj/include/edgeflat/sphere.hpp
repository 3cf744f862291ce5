#pragma once
// Latitude-longitude grid on the round sphere of area 4 pi (the Fubini-Study
// metric 2/(1+|z|^2)^2 i dz dzbar), its Laplacian g^{-1} d dbar and the
// Green's function of that Laplacian.

#include <cmath>
#include <span>
#include <vector>

#include "edgeflat/common.hpp"
#include "edgeflat/fft.hpp"
#include "edgeflat/stencil.hpp"

namespace edgeflat {

struct SphereGrid {
  int n_phi = 32;     // colatitude cells on (0, pi)
  int n_lambda = 64;  // longitudes, even

  double h() const { return pi / n_phi; }
  double phi(int i) const { return (i + 0.5) * h(); }
  double lambda(int j) const { return 2 * pi * j / n_lambda; }
  std::size_t size() const { return std::size_t(n_phi) * n_lambda; }
  std::size_t index(int i, int j) const { return std::size_t(i) * n_lambda + j; }
  // Midpoint weight of the area form sin(phi) dphi dlambda.
  double weight(int i) const {
    return 2 * std::sin(phi(i)) * std::sin(h() / 2) * (2 * pi / n_lambda);
  }
};

inline double sphere_distance(double phi1, double lam1, double phi2, double lam2) {
  double c = std::cos(phi1) * std::cos(phi2) + std::sin(phi1) * std::sin(phi2) * std::cos(lam1 - lam2);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

// (1/2)(v_pp + cot(phi) v_p + v_ll / sin^2 phi), with parity closure at
// both poles and spectral longitude derivatives.
class SphereOps {
 public:
  explicit SphereOps(const SphereGrid& g) : g_(g), st_(g.n_phi, g.h(), Closure::parity, Closure::parity) {}

  std::vector<cplx> laplacian(std::span<const cplx> v) const {
    int N = g_.n_phi, L = g_.n_lambda;
    std::vector<cplx> vll(v.begin(), v.end());
    const auto& plan = fft_plan({L}, N);
    plan.forward(vll);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < L; ++j) {
        double m = wavenumber(j, L);
        vll[g_.index(i, j)] *= -m * m;
      }
    plan.backward(vll);
    std::vector<cplx> out(v.size());
    for (int i = 0; i < N; ++i) {
      double p = g_.phi(i), s = std::sin(p), ct = std::cos(p) / s;
      const auto& row = st_.row(i);
      for (int j = 0; j < L; ++j) {
        int jf = (j + L / 2) % L;
        cplx d1 = 0, d2 = 0;
        for (const auto& t : row.terms) {
          cplx x = v[g_.index(t.node, t.flip ? jf : j)];
          d1 += t.d1 * x;
          d2 += t.d2 * x;
        }
        out[g_.index(i, j)] = 0.5 * (d2 + ct * d1 + vll[g_.index(i, j)] / (s * s));
      }
    }
    return out;
  }

 private:
  SphereGrid g_;
  RadialStencil st_;
};

// Green's function of the complex Laplacian g^{-1} d dbar of the round
// sphere: Delta G_p = delta_p - 1/Vol, mean zero, then shifted down by its
// maximum (plus `margin`) so it is negative everywhere. The profile depends
// on the geodesic distance d only:
//   G(d) = (1/pi) log sin(d/2) + R,
// where the logarithm carries the point source exactly and the regular part R
// solves Delta R = -1/Vol - Delta[(1/pi) log sin(d/2)] = 0 away from p; R is
// fixed numerically by the mean-zero condition on a colatitude grid around p.
class GreensFunction {
 public:
  explicit GreensFunction(int n_phi = 2048, double margin = 1e-9) : grid_{n_phi, 8} {
    double mean = 0, area = 0;
    for (int i = 0; i < grid_.n_phi; ++i) {
      double w = grid_.weight(i) * grid_.n_lambda;
      mean += w * singular(grid_.phi(i));
      area += w;
    }
    regular_ = -mean / area;
    double top = -1e300;
    for (int i = 0; i < grid_.n_phi; ++i) top = std::max(top, singular(grid_.phi(i)) + regular_);
    shift_ = std::max(top, singular(pi) + regular_) + margin;
  }

  double regular_part() const { return regular_; }
  double shift() const { return shift_; }
  const SphereGrid& profile_grid() const { return grid_; }
  // Mean-zero Green's function (unshifted).
  double unshifted(double d) const {
    if (d <= 0) throw SingularPointError("Green's function evaluated at its pole");
    return singular(d) + regular_;
  }
  double operator()(double d) const { return unshifted(d) - shift_; }
  double operator()(double phi1, double lam1, double phi2, double lam2) const {
    return (*this)(sphere_distance(phi1, lam1, phi2, lam2));
  }

 private:
  static double singular(double d) { return std::log(std::sin(d / 2)) / pi; }
  SphereGrid grid_;
  double regular_ = 0, shift_ = 0;
};

}  // namespace edgeflat
