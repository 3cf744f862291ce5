#pragma once
// Real banded LU (LAPACK dgbtrf/dgbtrs) as a value type.

#include <lapacke.h>

#include <span>
#include <string>
#include <vector>

#include "edgeflat/common.hpp"

namespace edgeflat {

class BandedLU {
 public:
  BandedLU() = default;
  BandedLU(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku), ld_(2 * kl + ku + 1), ab_(std::size_t(ld_) * n, 0.0) {}

  int size() const { return n_; }
  void add(int i, int j, double v) {
    if (j - i > ku_ || i - j > kl_) throw std::logic_error("entry outside band");
    ab_[std::size_t(j) * ld_ + kl_ + ku_ + i - j] += v;
  }
  void factor() {
    ipiv_.assign(n_, 0);
    int info = LAPACKE_dgbtrf(LAPACK_COL_MAJOR, n_, n_, kl_, ku_, ab_.data(), ld_, ipiv_.data());
    if (info != 0) throw SolverError("banded factorization failed, info " + std::to_string(info));
    factored_ = true;
  }
  // Solves in place for `nrhs` column-major right-hand sides of length n.
  void solve(std::span<double> rhs, int nrhs) const {
    if (!factored_) throw std::logic_error("solve before factor");
    int info = LAPACKE_dgbtrs(LAPACK_COL_MAJOR, 'N', n_, kl_, ku_, nrhs, ab_.data(), ld_,
                              ipiv_.data(), rhs.data(), n_);
    if (info != 0) throw SolverError("banded solve failed, info " + std::to_string(info));
  }

 private:
  int n_ = 0, kl_ = 0, ku_ = 0, ld_ = 1;
  std::vector<double> ab_;
  std::vector<lapack_int> ipiv_;
  bool factored_ = false;
};

}  // namespace edgeflat
