#pragma once
// Metric, Christoffel symbols, curvature and its covariant derivative at a
// point, from the 5-jet of a Kaehler potential in N complex coordinates.
// Slots of the jet are (z_1, zbar_1, ..., z_N, zbar_N).

#include <Eigen/Dense>

#include <array>
#include <cmath>

#include "edgeflat/jet.hpp"

namespace edgeflat {

template <int N>
struct CurvaturePoint {
  using Mat = Eigen::Matrix<cplx, N, N>;
  Mat g;  // g(i, j) = g_{i jbar}
  // R[a][b][c][d] = R_{a bbar c dbar}; DR[m][a][b][c][d] = (nabla_m R)_{a bbar c dbar}
  std::array<std::array<std::array<std::array<cplx, N>, N>, N>, N> R{};
  std::array<std::array<std::array<std::array<std::array<cplx, N>, N>, N>, N>, N> DR{};
  // Gamma[p][m][a] = Gamma^p_{m a}
  std::array<std::array<std::array<cplx, N>, N>, N> Gamma{};
  double norm_R = 0;
  double norm_DR = 0;
  double norm_Ric = 0;
  double symmetry_error = 0;  // Kaehler symmetries of R, relative
};

namespace detail {

// E with columns orthonormal for g: E^T g conj(E) = 1.
template <int N>
Eigen::Matrix<cplx, N, N> unitary_frame(const Eigen::Matrix<cplx, N, N>& g) {
  Eigen::Matrix<cplx, N, N> h = 0.5 * (g + g.adjoint());
  Eigen::LLT<Eigen::Matrix<cplx, N, N>> llt(h);
  if (llt.info() != Eigen::Success) throw SingularPointError("metric not positive definite at scan point");
  Eigen::Matrix<cplx, N, N> L = llt.matrixL();
  return L.inverse().transpose();
}

}  // namespace detail

template <int N>
CurvaturePoint<N> curvature_from_potential(const Jet<2 * N, 5>& phi) {
  using J = Jet<2 * N, 5>;
  using Idx = typename J::Index;
  CurvaturePoint<N> out;
  std::array<std::array<J, N>, N> g;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) g[i][j] = phi.d(2 * i).d(2 * j + 1);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) out.g(i, j) = g[i][j].value();

  // Inverse as jets: h[j][i] with sum_j g[i][j] h[j][k] = delta.
  std::array<std::array<J, N>, N> h;
  if constexpr (N == 1) {
    h[0][0] = J(1.0) / g[0][0];
  } else {
    J det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    J inv = J(1.0) / det;
    h[0][0] = g[1][1] * inv;
    h[1][1] = g[0][0] * inv;
    h[0][1] = -(g[0][1] * inv);
    h[1][0] = -(g[1][0] * inv);
  }
  // g^{m nbar} = h[n][m].
  std::array<std::array<std::array<J, N>, N>, N> dg, dbg;  // d_k g_{i jbar}, dbar_k g_{i jbar}
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        dg[k][i][j] = g[i][j].d(2 * k);
        dbg[k][i][j] = g[i][j].d(2 * k + 1);
      }

  std::array<std::array<std::array<std::array<J, N>, N>, N>, N> R;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < N; ++d) {
          J r = -(dg[a][c][d].d(2 * b + 1));
          for (int m = 0; m < N; ++m)
            for (int n = 0; n < N; ++n) r += h[n][m] * dg[c][a][n] * dbg[d][m][b];
          R[a][b][c][d] = r;
          out.R[a][b][c][d] = r.value();
        }

  for (int p = 0; p < N; ++p)
    for (int m = 0; m < N; ++m)
      for (int a = 0; a < N; ++a) {
        cplx s = 0;
        for (int q = 0; q < N; ++q) s += h[q][p].value() * dg[m][a][q].value();
        out.Gamma[p][m][a] = s;
      }

  for (int m = 0; m < N; ++m)
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < N; ++c)
          for (int d = 0; d < N; ++d) {
            Idx e{};
            e[2 * m] = 1;
            cplx v = R[a][b][c][d].derivative(e);
            for (int p = 0; p < N; ++p) {
              v -= out.Gamma[p][m][a] * out.R[p][b][c][d];
              v -= out.Gamma[p][m][c] * out.R[a][b][p][d];
            }
            out.DR[m][a][b][c][d] = v;
          }

  // Norms in a g-unitary frame.
  auto E = detail::unitary_frame<N>(out.g);
  auto Ec = E.conjugate();
  double nr = 0, nd = 0, scale = 0, sym = 0;
  std::array<std::array<std::array<std::array<cplx, N>, N>, N>, N> Rf{};
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int c = 0; c < N; ++c)
        for (int d = 0; d < N; ++d) {
          cplx s = 0;
          for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
              for (int k = 0; k < N; ++k)
                for (int l = 0; l < N; ++l)
                  s += E(i, a) * Ec(j, b) * E(k, c) * Ec(l, d) * out.R[i][j][k][l];
          Rf[a][b][c][d] = s;
          nr += std::norm(s);
          scale = std::max(scale, std::abs(out.R[a][b][c][d]));
          sym = std::max(sym, std::abs(out.R[a][b][c][d] - out.R[c][b][a][d]));
          sym = std::max(sym, std::abs(out.R[a][b][c][d] - out.R[a][d][c][b]));
        }
  for (int m = 0; m < N; ++m)
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b)
        for (int c = 0; c < N; ++c)
          for (int d = 0; d < N; ++d) {
            cplx s = 0;
            for (int q = 0; q < N; ++q)
              for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                  for (int k = 0; k < N; ++k)
                    for (int l = 0; l < N; ++l)
                      s += E(q, m) * E(i, a) * Ec(j, b) * E(k, c) * Ec(l, d) * out.DR[q][i][j][k][l];
            nd += std::norm(s);
          }
  // Ricci in the frame: Ric_{a bbar} = sum_c R_{a bbar c cbar}.
  double nric = 0;
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      cplx s = 0;
      for (int c = 0; c < N; ++c) s += Rf[a][b][c][c];
      nric += std::norm(s);
    }
  out.norm_R = std::sqrt(nr);
  out.norm_DR = std::sqrt(2 * nd);
  out.norm_Ric = std::sqrt(nric);
  out.symmetry_error = scale > 0 ? sym / scale : sym;
  return out;
}

}  // namespace edgeflat
