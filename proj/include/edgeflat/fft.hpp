#pragma once
// Batched complex FFTs over the trailing dimensions of a contiguous array.
// Thin RAII layer over FFTW plans; plans are cached per shape.

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

#include "edgeflat/common.hpp"

namespace edgeflat {

class FftPlan {
 public:
  // Transform dims (row-major) applied to `batch` consecutive blocks.
  FftPlan(std::vector<int> dims, int batch) : dims_(std::move(dims)), batch_(batch) {
    block_ = 1;
    for (int d : dims_) block_ *= d;
    std::vector<cplx> scratch(std::size_t(block_) * batch_);
    auto* p = reinterpret_cast<fftw_complex*>(scratch.data());
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd_ = fftw_plan_many_dft(int(dims_.size()), dims_.data(), batch_, p, nullptr, 1,
                              block_, p, nullptr, 1, block_, FFTW_FORWARD, flags);
    bwd_ = fftw_plan_many_dft(int(dims_.size()), dims_.data(), batch_, p, nullptr, 1,
                              block_, p, nullptr, 1, block_, FFTW_BACKWARD, flags);
    if (!fwd_ || !bwd_) throw std::runtime_error("fftw plan creation failed");
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
  ~FftPlan() {
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
  }

  void forward(std::span<cplx> data) const { run(fwd_, data); }
  // Normalized inverse.
  void backward(std::span<cplx> data) const {
    run(bwd_, data);
    double s = 1.0 / block_;
    for (auto& x : data) x *= s;
  }
  int block() const { return block_; }

 private:
  void run(fftw_plan plan, std::span<cplx> data) const {
    if (data.size() != std::size_t(block_) * batch_) throw std::invalid_argument("fft size");
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
  }
  std::vector<int> dims_;
  int batch_;
  int block_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

inline const FftPlan& fft_plan(const std::vector<int>& dims, int batch) {
  static std::mutex mu;
  static std::map<std::pair<std::vector<int>, int>, std::unique_ptr<FftPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(dims, batch);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<FftPlan>(dims, batch)).first;
  return *it->second;
}

// Signed wavenumber of FFT slot j on an n-point grid (Nyquist maps to 0 for
// odd derivatives, handled by callers via nyquist()).
inline int wavenumber(int j, int n) { return j <= n / 2 ? j : j - n; }
inline bool nyquist(int j, int n) { return n % 2 == 0 && j == n / 2; }

}  // namespace edgeflat
