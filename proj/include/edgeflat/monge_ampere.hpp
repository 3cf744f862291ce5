#pragma once
// Continuity method for (omega + i ddbar u)^n = e^{tF - c} omega^n.
//
// Two discretizations share the Newton and continuation drivers:
//   CoverProblem  n = 1 on the branched-cover torus (closed, spectral),
//   CellProblem   n = 2 on cone disk x flat torus with u = 0 at r = 1.
// A problem type supplies volume weights, the metric of omega + i ddbar u,
// and a solver for the linearized operator Delta_{omega-hat}.

#include <Eigen/Dense>
#include <unsupported/Eigen/IterativeSolvers>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "edgeflat/background_metric.hpp"
#include "edgeflat/model_poisson.hpp"
#include "edgeflat/sphere.hpp"

namespace edgeflat {

struct StepRecord {
  double t = 0, c = 0;
  double tF_min = 0, tF_max = 0;
  double residual = 0;
  double a1 = 0, a2 = 0;  // eigenvalue window of g-hat relative to g
  double volume_error = 0;
  int newton_iters = 0;
};

struct SolveState {
  double t = 0;
  std::vector<double> u;
  double c = 0;
  std::vector<double> newton_history;  // sup-norm residuals of the last t-step
  double normalization = 0;            // integral of u omega_0^n
  std::vector<StepRecord> steps;       // accepted t values
  std::vector<std::vector<double>> histories;  // newton_history per accepted step
};

struct ContinuityOptions {
  double initial_dt = 0.1;
  double newton_tol = 1e-10;
  int max_halvings = 30;
  int max_newton = 25;
  int easy_iterations = 3;  // a t-step this cheap counts as easy
  double min_dt = 1e-6;
  std::vector<double> t_grid;  // explicit targets; empty means adaptive from initial_dt
  double linear_tol = 1e-12;
  int gmres_restart = 30;
  int max_linear = 400;
};

inline double sup_norm(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// c = log(sum e^{tF} vol / sum vol), evaluated with a shifted exponent.
inline double normalize_constant_c(std::span<const double> F, double t, std::span<const double> volume) {
  if (t == 0) return 0;
  double shift = -std::numeric_limits<double>::infinity();
  for (double f : F) shift = std::max(shift, t * f);
  double num = 0, den = 0;
  for (std::size_t k = 0; k < F.size(); ++k) {
    num += std::exp(t * F[k] - shift) * volume[k];
    den += volume[k];
  }
  double c = shift + std::log(num / den);
  if (!std::isfinite(c)) throw SolverError("non-finite quadrature in the normalizing constant");
  return c;
}

// Eigenvalues of h relative to g at node k, i.e. roots of det(h - x g) = 0.
inline std::pair<double, double> relative_eigenvalues(const MetricField& g, const MetricField& h, std::size_t k) {
  if (g.n == 1) {
    double q = h.g11[k] / g.g11[k];
    return {q, q};
  }
  double a = g.det(k);
  double b = g.g11[k] * h.g22[k] + g.g22[k] * h.g11[k] - 2 * (g.g12[k] * std::conj(h.g12[k])).real();
  double c = h.det(k);
  double disc = std::sqrt(std::max(0.0, b * b - 4 * a * c));
  return {(b - disc) / (2 * a), (b + disc) / (2 * a)};
}

// Eigenvalue window of g-hat relative to g over all nodes.
inline std::pair<double, double> equivalence_window(const MetricField& g, const MetricField& h) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    auto [a, b] = relative_eigenvalues(g, h, k);
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// n = 1 on the cover torus

class CoverProblem {
 public:
  explicit CoverProblem(const SphereBackground& bg)
      : grid_(bg.grid), ops_(bg.grid), G_(bg.G), G0_(bg.G0), F_(bg.F) {
    double w = bg.weight();
    vol_.resize(G_.size());
    ref_.resize(G_.size());
    for (std::size_t k = 0; k < G_.size(); ++k) {
      vol_[k] = G_[k] * w;
      ref_[k] = G0_[k] * w;
    }
  }

  static constexpr int dimension = 1;
  bool closed() const { return true; }
  std::size_t size() const { return G_.size(); }
  const HexTorus& grid() const { return grid_; }
  const TorusOps& ops() const { return ops_; }
  std::span<const double> F() const { return F_; }
  void set_F(std::vector<double> F) { F_ = std::move(F); }
  std::span<const double> volume() const { return vol_; }
  std::span<const double> reference_volume() const { return ref_; }

  MetricField background() const { return density(G_); }
  MetricField hat(std::span<const double> u) const {
    auto dd = ops_.ddbar(complexify(u));
    std::vector<double> h(size());
    for (std::size_t k = 0; k < size(); ++k) h[k] = G_[k] + dd[k].real();
    return density(std::move(h));
  }
  std::vector<double> log_ratio(const MetricField& h) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = std::log(h.g11[k] / G_[k]);
    return out;
  }
  std::vector<double> laplacian(const MetricField& h, std::span<const double> v) const {
    auto dd = ops_.ddbar(complexify(v));
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = dd[k].real() / h.g11[k];
    return out;
  }
  // Bordered solve of Delta_h d = f - mu: mu is the multiplier that puts the
  // right-hand side in the range {integral f omega-hat = 0}; d has zero mean
  // against omega_0.
  std::vector<double> solve_linearized(const MetricField& h, std::span<const double> f, const ContinuityOptions&,
                                       double* multiplier = nullptr) const {
    double num = 0, den = 0;
    for (std::size_t k = 0; k < size(); ++k) {
      num += h.g11[k] * f[k];
      den += h.g11[k];
    }
    double mu = num / den;
    if (multiplier) *multiplier = mu;
    std::vector<cplx> rhs(size());
    double scale = 0;
    for (std::size_t k = 0; k < size(); ++k) {
      rhs[k] = h.g11[k] * (f[k] - mu);
      scale = std::max(scale, std::abs(h.g11[k] * f[k]));
    }
    auto d = ops_.solve_ddbar(rhs, scale);
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = d[k].real();
    project(out);
    return out;
  }
  // Remove the omega_0 mean.
  void project(std::vector<double>& u) const {
    double s = 0, w = 0;
    for (std::size_t k = 0; k < size(); ++k) {
      s += u[k] * ref_[k];
      w += ref_[k];
    }
    for (auto& x : u) x -= s / w;
  }

  // Gaussian curvature -G^{-1} ddbar log G of a density on the cover.
  std::vector<double> gaussian_curvature(const MetricField& h) const {
    std::vector<cplx> lg(size());
    for (std::size_t k = 0; k < size(); ++k) lg[k] = std::log(h.g11[k]);
    auto dd = ops_.ddbar(lg);
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = -dd[k].real() / h.g11[k];
    return out;
  }

 private:
  static std::vector<cplx> complexify(std::span<const double> v) { return {v.begin(), v.end()}; }
  static MetricField density(std::vector<double> g) {
    MetricField m;
    m.n = 1;
    m.frame = Frame::psi;
    m.g11 = std::move(g);
    return m;
  }

  HexTorus grid_;
  TorusOps ops_;
  std::vector<double> G_, G0_, F_, vol_, ref_;
};

// ---------------------------------------------------------------------------
// n = 2 on cone disk x torus, edge frame e1 = d_z, e2 = (|zeta|^{1-b}/b) d_zeta

class CellProblem;

namespace detail {

// Matrix-free operator for Eigen's iterative solvers.
struct CellOperator;

}  // namespace detail

}  // namespace edgeflat

namespace Eigen::internal {
template <>
struct traits<edgeflat::detail::CellOperator> : public traits<Eigen::SparseMatrix<double>> {};
}  // namespace Eigen::internal

namespace edgeflat {

// Edge-frame complex Hessian of a real function, by default with u = 0 at r = 1:
//   h11 = u_{z zbar}, h22 = (1/4)(u_rr + u_r/r + u_thth/(b^2 r^2)),
//   h12 = (e^{i theta}/2)(d_r + (i/(b r)) d_theta) u_z.
// With dirichlet = false the outer radial closure is one-sided.
inline MetricField edge_hessian(const ConeOps& ops, std::span<const double> u, bool dirichlet = true) {
  const ConeGrid& g = ops.grid();
  std::size_t n = g.size();
  int M = g.n_theta, T = std::max(g.n_tan, 1), S = g.slice(), T2 = g.tan_count();
  std::vector<cplx> U(u.begin(), u.end());
  ops.forward(U);
  std::vector<cplx> h11(n), hzz(n), uz(n), uzt(n), utt(n);
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < M; ++j) {
      double m = ops.mode(j);
      bool nm = ops.nyq_theta(j);
      for (int a = 0; a < T; ++a)
        for (int b = 0; b < T; ++b) {
          std::size_t k = g.index(i, j, a, b);
          double kx = ops.kx(a), ky = ops.kx(b);
          bool nt = g.n_tan && (ops.nyq_tan(a) || ops.nyq_tan(b));
          cplx sz = nt ? cplx(0) : 0.5 * (I * kx + ky);
          h11[k] = U[k] * (-0.25 * (kx * kx + ky * ky));
          uz[k] = U[k] * sz;
          uzt[k] = nm ? cplx(0) : U[k] * sz * (I * m);
          utt[k] = U[k] * (-m * m);
        }
    }
  const auto& plan = fft_plan(ops.fft_dims(), g.n_r);
  for (auto* v : {&h11, &uz, &uzt, &utt}) plan.backward(*v);
  std::vector<cplx> zero(dirichlet ? S : 0, 0.0);
  std::vector<cplx> uc(u.begin(), u.end());
  auto ur = ops.d_r(uc, zero), urr = ops.d_rr(uc, zero), uzr = ops.d_r(uz, zero);
  MetricField H;
  H.n = 2;
  H.frame = Frame::edge;
  H.g11.resize(n);
  H.g22.resize(n);
  H.g12.resize(n);
  double b2 = g.beta * g.beta;
  for (int i = 0; i < g.n_r; ++i) {
    double r = g.r(i);
    for (int j = 0; j < M; ++j) {
      cplx ph = std::polar(0.5, g.theta(j));
      for (int t = 0; t < T2; ++t) {
        std::size_t k = std::size_t(i) * S + j * T2 + t;
        H.g11[k] = h11[k].real();
        H.g22[k] = 0.25 * (urr[k].real() + ur[k].real() / r + utt[k].real() / (b2 * r * r));
        H.g12[k] = ph * (uzr[k] + I * uzt[k] / (g.beta * r));
      }
    }
  }
  return H;
}

inline MetricField add_metrics(const MetricField& a, const MetricField& b, double s = 1.0) {
  MetricField m = a;
  for (std::size_t k = 0; k < m.size(); ++k) {
    m.g11[k] += s * b.g11[k];
    m.g22[k] += s * b.g22[k];
    m.g12[k] += s * b.g12[k];
  }
  return m;
}

class CellProblem {
 public:
  CellProblem(const ConeGrid& grid, MetricField g, MetricField g0, std::vector<double> F)
      : grid_(grid), ops_(grid), g_(std::move(g)), g0_(std::move(g0)), F_(std::move(F)) {
    if (!grid.n_tan) throw ValidationError("the n = 2 cell needs a tangential grid");
    if (g_.n != 2 || g_.size() != grid.size() || F_.size() != grid.size())
      throw ValidationError("cell metric or F does not match the grid");
    vol_.resize(size());
    ref_.resize(size());
    for (int i = 0; i < grid.n_r; ++i)
      for (int s = 0; s < grid.slice(); ++s) {
        std::size_t k = std::size_t(i) * grid.slice() + s;
        vol_[k] = g_.det(k) * grid.weight(i);
        ref_[k] = g0_.det(k) * grid.weight(i);
      }
  }

  static constexpr int dimension = 2;
  bool closed() const { return false; }
  std::size_t size() const { return grid_.size(); }
  const ConeGrid& grid() const { return grid_; }
  const ConeOps& ops() const { return ops_; }
  std::span<const double> F() const { return F_; }
  void set_F(std::vector<double> F) { F_ = std::move(F); }
  std::span<const double> volume() const { return vol_; }
  std::span<const double> reference_volume() const { return ref_; }

  const MetricField& background() const { return g_; }
  MetricField hat(std::span<const double> u) const { return add_metrics(g_, edge_hessian(ops_, u)); }
  std::vector<double> log_ratio(const MetricField& h) const {
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = std::log(h.det(k) / g_.det(k));
    return out;
  }
  // tr(h^{-1} Hess v) = A H11 + C H22 + 2 Re(conj(B) H12).
  std::vector<double> laplacian(const MetricField& h, std::span<const double> v) const {
    auto H = edge_hessian(ops_, v);
    std::vector<double> out(size());
    for (std::size_t k = 0; k < size(); ++k) {
      auto [A, B, C] = h.inverse(k);
      out[k] = A.real() * H.g11[k] + C.real() * H.g22[k] + 2 * (std::conj(B) * H.g12[k]).real();
    }
    return out;
  }
  std::vector<double> solve_linearized(const MetricField& h, std::span<const double> f,
                                       const ContinuityOptions& opt, double* = nullptr) const;
  void project(std::vector<double>&) const {}

  int last_linear_iterations() const { return last_iters_; }

 private:
  ConeGrid grid_;
  ConeOps ops_;
  MetricField g_, g0_;
  std::vector<double> F_, vol_, ref_;
  mutable int last_iters_ = 0;
};

namespace detail {

struct CellOperator : public Eigen::EigenBase<CellOperator> {
  using Scalar = double;
  using RealScalar = double;
  using StorageIndex = int;
  enum { ColsAtCompileTime = Eigen::Dynamic, MaxColsAtCompileTime = Eigen::Dynamic, IsRowMajor = false };

  const CellProblem* problem = nullptr;
  const MetricField* metric = nullptr;

  Eigen::Index rows() const { return Eigen::Index(problem->size()); }
  Eigen::Index cols() const { return Eigen::Index(problem->size()); }
  template <class Rhs>
  Eigen::Product<CellOperator, Rhs, Eigen::AliasFreeProduct> operator*(const Eigen::MatrixBase<Rhs>& x) const {
    return Eigen::Product<CellOperator, Rhs, Eigen::AliasFreeProduct>(*this, x.derived());
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    auto y = problem->laplacian(*metric, std::span<const double>(x.data(), std::size_t(x.size())));
    return Eigen::Map<Eigen::VectorXd>(y.data(), Eigen::Index(y.size()));
  }
};

// Preconditioner: the operator with h^{-1} averaged over theta and the torus
// at each radius and the mixed term dropped, inverted mode by mode.
class CellPreconditioner {
 public:
  CellPreconditioner() = default;
  template <class M>
  CellPreconditioner& analyzePattern(const M&) { return *this; }
  template <class M>
  CellPreconditioner& factorize(const M&) { return *this; }
  template <class M>
  CellPreconditioner& compute(const M& op) {
    const CellProblem& p = *op.problem;
    const ConeGrid& g = p.grid();
    std::vector<double> pa(g.n_r, 0.0), qa(g.n_r, 0.0);
    int S = g.slice();
    for (int i = 0; i < g.n_r; ++i) {
      for (int s = 0; s < S; ++s) {
        auto [A, B, C] = op.metric->inverse(std::size_t(i) * S + s);
        qa[i] += A.real();
        pa[i] += C.real();
      }
      qa[i] /= S;
      pa[i] /= S;
    }
    solver_ = std::make_shared<ModeSolver>(g, pa, qa);
    return *this;
  }
  template <class Rhs>
  Eigen::VectorXd solve(const Eigen::MatrixBase<Rhs>& b) const {
    std::vector<cplx> f(std::size_t(b.size()));
    for (Eigen::Index k = 0; k < b.size(); ++k) f[std::size_t(k)] = b(k);
    auto v = solver_->solve(f);
    Eigen::VectorXd out(b.size());
    for (Eigen::Index k = 0; k < b.size(); ++k) out(k) = v[std::size_t(k)].real();
    return out;
  }
  Eigen::ComputationInfo info() const { return Eigen::Success; }

 private:
  std::shared_ptr<ModeSolver> solver_;
};

}  // namespace detail
}  // namespace edgeflat

namespace Eigen::internal {
template <class Rhs>
struct generic_product_impl<edgeflat::detail::CellOperator, Rhs, SparseShape, DenseShape, GemvProduct>
    : generic_product_impl_base<edgeflat::detail::CellOperator, Rhs,
                                generic_product_impl<edgeflat::detail::CellOperator, Rhs>> {
  using Scalar = typename Product<edgeflat::detail::CellOperator, Rhs>::Scalar;
  template <class Dest>
  static void scaleAndAddTo(Dest& dst, const edgeflat::detail::CellOperator& lhs, const Rhs& rhs,
                            const Scalar& alpha) {
    Eigen::VectorXd x = rhs;
    dst.noalias() += alpha * lhs.apply(x);
  }
};
}  // namespace Eigen::internal

namespace edgeflat {

inline std::vector<double> CellProblem::solve_linearized(const MetricField& h, std::span<const double> f,
                                                         const ContinuityOptions& opt, double*) const {
  detail::CellOperator op;
  op.problem = this;
  op.metric = &h;
  Eigen::GMRES<detail::CellOperator, detail::CellPreconditioner> gmres;
  gmres.set_restart(opt.gmres_restart);
  gmres.setTolerance(opt.linear_tol);
  gmres.setMaxIterations(opt.max_linear);
  gmres.compute(op);
  Eigen::Map<const Eigen::VectorXd> b(f.data(), Eigen::Index(f.size()));
  Eigen::VectorXd x = gmres.solve(b);
  last_iters_ = int(gmres.iterations());
  if (gmres.info() != Eigen::Success)
    throw SolverError("linearized solve did not converge (relative error " + std::to_string(gmres.error()) + ")");
  return {x.data(), x.data() + x.size()};
}

// ---------------------------------------------------------------------------
// Drivers

template <class P>
double normalization_integral(const P& p, std::span<const double> u) {
  double s = 0;
  auto ref = p.reference_volume();
  for (std::size_t k = 0; k < u.size(); ++k) s += u[k] * ref[k];
  return s;
}

template <class P>
std::vector<double> ma_residual(const P& p, const SolveState& s, const MetricField& hat) {
  if (!s.u.empty()) {
    for (std::size_t k = 0; k < hat.size(); ++k)
      if (!(hat.min_eigenvalue(k) > 0)) throw SolverError("omega-hat not positive at node " + std::to_string(k));
  }
  auto res = p.log_ratio(hat);
  auto F = p.F();
  for (std::size_t k = 0; k < res.size(); ++k) res[k] -= s.t * F[k] - s.c;
  return res;
}

template <class P>
std::vector<double> ma_residual(const P& p, const SolveState& s) {
  return ma_residual(p, s, p.hat(s.u));
}

template <class P>
SolveState initial_state(const P& p) {
  SolveState s;
  s.u.assign(p.size(), 0.0);
  return s;
}

// One Newton step on omega-hat^n/omega^n = e^{tF - c}: Delta_hat d = -(1 - e^{-res}),
// then backtracking until omega-hat stays positive and the residual drops.
template <class P>
SolveState newton_step(const P& p, const SolveState& s, const ContinuityOptions& opt = {}) {
  auto hat = p.hat(s.u);
  auto res = ma_residual(p, s, hat);
  double r0 = sup_norm(res);
  if (r0 == 0) return s;
  std::vector<double> rhs(res.size());
  for (std::size_t k = 0; k < res.size(); ++k) rhs[k] = -(1 - std::exp(-res[k]));
  auto d = p.solve_linearized(hat, rhs, opt);
  double step = 1;
  for (int h = 0; h <= opt.max_halvings; ++h, step *= 0.5) {
    SolveState trial = s;
    for (std::size_t k = 0; k < d.size(); ++k) trial.u[k] += step * d[k];
    p.project(trial.u);
    auto th = p.hat(trial.u);
    bool positive = true;
    for (std::size_t k = 0; k < th.size() && positive; ++k) positive = th.min_eigenvalue(k) > 0;
    if (!positive) continue;
    double r1 = sup_norm(ma_residual(p, trial, th));
    // Strict decrease, unless both residuals already sit at round-off.
    constexpr double floor = 256 * std::numeric_limits<double>::epsilon();
    if (!(r1 < r0 || r1 <= floor)) continue;
    trial.normalization = normalization_integral(p, trial.u);
    trial.newton_history.push_back(r1);
    return trial;
  }
  throw SolverError("Newton line search exhausted at t = " + std::to_string(s.t));
}

// Newton at fixed t from the state s (whose t may differ).
template <class P>
SolveState solve_at(const P& p, SolveState s, double t, const ContinuityOptions& opt = {}) {
  s.t = t;
  s.c = normalize_constant_c(p.F(), t, p.volume());
  double r = sup_norm(ma_residual(p, s));
  s.newton_history = {r};
  for (int it = 0; it < opt.max_newton && r >= opt.newton_tol; ++it) {
    auto hist = s.newton_history;
    s = newton_step(p, s, opt);
    r = s.newton_history.back();
    hist.push_back(r);
    s.newton_history = hist;
  }
  if (r >= opt.newton_tol)
    throw SolverError("Newton did not reach tolerance at t = " + std::to_string(t) + " (residual " +
                      std::to_string(r) + ")");
  s.normalization = normalization_integral(p, s.u);
  return s;
}

template <class P>
StepRecord step_record(const P& p, const SolveState& s) {
  StepRecord rec;
  rec.t = s.t;
  rec.c = s.c;
  auto F = p.F();
  rec.tF_min = std::numeric_limits<double>::infinity();
  rec.tF_max = -rec.tF_min;
  for (double f : F) {
    rec.tF_min = std::min(rec.tF_min, s.t * f);
    rec.tF_max = std::max(rec.tF_max, s.t * f);
  }
  rec.residual = s.newton_history.empty() ? 0 : s.newton_history.back();
  rec.newton_iters = int(s.newton_history.size()) - 1;
  auto hat = p.hat(s.u);
  const MetricField& g = p.background();
  auto [lo, hi] = equivalence_window(g, hat);
  rec.a1 = lo;
  rec.a2 = hi;
  // Relative volume defect of omega-hat against omega.
  double vh = 0, vw = 0;
  auto vol = p.volume();
  for (std::size_t k = 0; k < hat.size(); ++k) {
    double ratio = hat.det(k) / (vol[k] > 0 ? g.det(k) : 1.0);
    vh += ratio * vol[k];
    vw += vol[k];
  }
  rec.volume_error = std::abs(vh - vw) / vw;
  return rec;
}

// From the trivial solution at t = 0 to t = 1: halve dt on failure, double it
// after three consecutive easy steps.
template <class P>
SolveState continuity_solve(const P& p, const ContinuityOptions& opt = {}) {
  SolveState s = initial_state(p);
  s.newton_history = {0.0};
  s.steps.push_back(step_record(p, s));
  s.histories.push_back(s.newton_history);
  std::deque<double> targets(opt.t_grid.begin(), opt.t_grid.end());
  if (!targets.empty() && targets.back() != 1.0) targets.push_back(1.0);
  double dt = opt.initial_dt;
  int easy = 0;
  std::string log;
  while (s.t < 1) {
    double target = targets.empty() ? std::min(1.0, s.t + dt) : targets.front();
    if (1 - target < 1e-12) target = 1;
    try {
      auto next = solve_at(p, s, target, opt);
      next.steps = s.steps;
      next.histories = s.histories;
      next.steps.push_back(step_record(p, next));
      next.histories.push_back(next.newton_history);
      s = std::move(next);
      if (!targets.empty()) targets.pop_front();
      if (int(s.newton_history.size()) - 1 <= opt.easy_iterations) {
        if (++easy >= 3 && targets.empty()) {
          dt *= 2;
          easy = 0;
        }
      } else {
        easy = 0;
      }
    } catch (const SolverError& e) {
      log += " [t=" + std::to_string(target) + ": " + e.what() + "]";
      easy = 0;
      double gap = target - s.t;
      if (gap / 2 < opt.min_dt) throw SolverError("continuation failed: step below minimum; history" + log);
      if (targets.empty()) dt = gap / 2;
      else targets.push_front(s.t + gap / 2);
    }
  }
  return s;
}

// n = 1: 1 + Delta_omega u = e^{tF - c} is linear in u.
inline SolveState dim1_exact_solve(const CoverProblem& p, double t) {
  SolveState s = initial_state(p);
  s.t = t;
  s.c = normalize_constant_c(p.F(), t, p.volume());
  auto g = p.background();
  std::vector<double> f(p.size());
  auto F = p.F();
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = std::exp(t * F[k] - s.c) - 1;
  s.u = p.solve_linearized(g, f, {});
  s.normalization = normalization_integral(p, s.u);
  s.newton_history = {sup_norm(ma_residual(p, s))};
  return s;
}

// ---------------------------------------------------------------------------
// Newton convergence diagnostics

struct QuadraticContraction {
  double K = 0;    // max r_{k+1} / r_k^2 over qualifying pairs
  int pairs = 0;
  bool pass = false;
};

// Pairs (r_k, r_{k+1}) with r_k < 1e-2 and r_{k+1} above the roundoff floor
// must satisfy r_{k+1} <= K r_k^2 with K r_k < 1 (genuine contraction).
inline QuadraticContraction quadratic_contraction(const std::vector<std::vector<double>>& histories,
                                                  double below = 1e-2, double floor = 1e-13) {
  QuadraticContraction q;
  bool contract = true;
  for (const auto& h : histories)
    for (std::size_t k = 0; k + 1 < h.size(); ++k) {
      if (!(h[k] < below) || h[k + 1] <= floor || h[k] == 0) continue;
      double K = h[k + 1] / (h[k] * h[k]);
      q.K = std::max(q.K, K);
      contract = contract && K * h[k] < 1;
      ++q.pairs;
    }
  q.pass = q.pairs > 0 && contract && q.K * below <= 1;
  return q;
}

// Residual level Newton stagnates at for this discretization: solve at t, keep
// stepping past tolerance until a step fails to halve the residual, and return
// the larger residual of that last pair. A fixed constant is not usable here
// because evaluation round-off grows with resolution (about 5e-14 on 16^4,
// 3e-11 on 64 x 32^3). A manufactured right-hand side cancels round-off at
// t = 1, so probe at an interior t.
template <class P>
double newton_floor(const P& p, double t = 0.5, const ContinuityOptions& opt = {}) {
  SolveState s = solve_at(p, initial_state(p), t, opt);
  double r = s.newton_history.back();
  for (int it = 0; it < opt.max_newton; ++it) {
    SolveState next;
    try {
      next = newton_step(p, s, opt);
    } catch (const SolverError&) {
      return r;  // no further decrease is possible
    }
    double r1 = next.newton_history.back();
    if (r1 > 0.5 * r) return std::max(r, r1);
    s = std::move(next);
    r = r1;
  }
  return r;
}

// Successors within this factor of the measured floor are round-off, not contraction.
inline constexpr double floor_margin = 2;

// ---------------------------------------------------------------------------
// Manufactured n = 2 problem

struct ManufacturedCell {
  CellProblem problem;
  std::vector<double> u_star;
  double a = 0, b = 0;
};

inline MetricField cone_torus_metric(const ConeTorusModel& model, const ConeGrid& g, bool reference = false) {
  return model.edge_metric(g, reference);
}

// u* = a cos(2 pi x / period)(1 - r^2) r^2 + b (1 - r^2) r^2, with b fixed so
// that sum det(g + Hess u*) w = sum det(g) w exactly; F = log(det(g-hat*)/det g).
inline ManufacturedCell make_manufactured_cell(const GeometrySpec& spec, const ConeParams& p, ConeGrid grid,
                                               double a = 0.02) {
  grid.beta = p.beta;
  grid.period = spec.period;
  ConeTorusModel model(spec, p);
  auto g = model.edge_metric(grid);
  auto g0 = model.edge_metric(grid, true);
  g.require_positive("background metric");
  auto phi_part = sample(grid, [&](double r, double, double x, double) {
    return cplx(a * std::cos(2 * pi * x / grid.period) * (1 - r * r) * r * r);
  });
  auto flux_part = sample(grid, [&](double r, double, double, double) { return cplx((1 - r * r) * r * r); });
  std::vector<double> u1(grid.size()), u2(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    u1[k] = phi_part.values[k].real();
    u2[k] = flux_part.values[k].real();
  }
  ConeOps ops(grid);
  auto H1 = edge_hessian(ops, u1), H2 = edge_hessian(ops, u2);
  // D(b) = sum w [det(g + H1 + b H2) - det g] = D0 + D1 b + D2 b^2.
  double D0 = 0, D1 = 0, D2 = 0;
  int S = grid.slice();
  for (int i = 0; i < grid.n_r; ++i)
    for (int s = 0; s < S; ++s) {
      std::size_t k = std::size_t(i) * S + s;
      double w = grid.weight(i);
      double p11 = g.g11[k] + H1.g11[k], p22 = g.g22[k] + H1.g22[k];
      cplx p12 = g.g12[k] + H1.g12[k];
      D0 += w * (p11 * p22 - std::norm(p12) - g.det(k));
      D1 += w * (p11 * H2.g22[k] + p22 * H2.g11[k] - 2 * (p12 * std::conj(H2.g12[k])).real());
      D2 += w * (H2.g11[k] * H2.g22[k] - std::norm(H2.g12[k]));
    }
  if (D1 == 0) throw SolverError("manufactured volume correction is degenerate");
  double b = -D0 / D1;
  for (int it = 0; it < 50; ++it) {
    double f = D0 + D1 * b + D2 * b * b, df = D1 + 2 * D2 * b;
    double nb = b - f / df;
    if (std::abs(nb - b) <= 1e-17 * (1 + std::abs(b))) {
      b = nb;
      break;
    }
    b = nb;
  }
  std::vector<double> us(grid.size());
  for (std::size_t k = 0; k < us.size(); ++k) us[k] = u1[k] + b * u2[k];
  auto hat = add_metrics(add_metrics(g, H1), H2, b);
  hat.require_positive("manufactured metric");
  std::vector<double> F(grid.size());
  for (std::size_t k = 0; k < F.size(); ++k) F[k] = std::log(hat.det(k) / g.det(k));
  return {CellProblem(grid, std::move(g), std::move(g0), std::move(F)), std::move(us), a, b};
}

// ---------------------------------------------------------------------------
// Kernel dimension of discrete Laplacians

struct KernelReport {
  int dimension = 0;
  double largest = 0;
  std::vector<double> smallest;  // ascending, a few
  double gap = 0;                // smallest nonzero / largest kernel singular value
};

inline KernelReport kernel_dimension(const Eigen::MatrixXd& A, double rel = 1e-8) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  if (svd.info() != Eigen::Success) throw SolverError("singular value decomposition failed");
  Eigen::VectorXd s = svd.singularValues();  // descending
  KernelReport r;
  r.largest = s(0);
  for (Eigen::Index k = s.size() - 1; k >= std::max<Eigen::Index>(0, s.size() - 4); --k) r.smallest.push_back(s(k));
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) < rel * r.largest) ++r.dimension;
  if (r.dimension > 0 && r.dimension < s.size()) {
    double last_kernel = s(s.size() - r.dimension), first_range = s(s.size() - r.dimension - 1);
    r.gap = last_kernel > 0 ? first_range / last_kernel : std::numeric_limits<double>::infinity();
  }
  return r;
}

template <class Apply>
Eigen::MatrixXd dense_matrix(std::size_t n, Apply apply) {
  Eigen::MatrixXd A(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1;
    auto col = apply(std::span<const double>(e));
    for (std::size_t i = 0; i < n; ++i) A(Eigen::Index(i), Eigen::Index(j)) = col[i];
    e[j] = 0;
  }
  return A;
}

// Delta_m = m^{-1} ddbar on the cover for a density m (omega or omega-hat).
inline KernelReport kernel_dimension(const CoverProblem& p, const MetricField& m) {
  if (p.size() > 4096) throw ResolutionError("cover grid too large for a dense kernel computation");
  return kernel_dimension(dense_matrix(p.size(), [&](std::span<const double> v) { return p.laplacian(m, v); }));
}

// Round metric omega_0 on a latitude-longitude grid.
inline KernelReport kernel_dimension_round_sphere(const SphereGrid& g) {
  SphereOps ops(g);
  return kernel_dimension(dense_matrix(g.size(), [&](std::span<const double> v) {
    std::vector<cplx> c(v.begin(), v.end());
    auto l = ops.laplacian(c);
    std::vector<double> out(l.size());
    for (std::size_t k = 0; k < l.size(); ++k) out[k] = l[k].real();
    return out;
  }));
}

// Flat torus without cone points.
inline KernelReport kernel_dimension_flat_torus(int n) {
  TorusOps ops(HexTorus{n});
  return kernel_dimension(dense_matrix(std::size_t(n) * n, [&](std::span<const double> v) {
    auto l = ops.ddbar(std::vector<cplx>(v.begin(), v.end()));
    std::vector<double> out(l.size());
    for (std::size_t k = 0; k < l.size(); ++k) out[k] = l[k].real();
    return out;
  }));
}

// ---------------------------------------------------------------------------
// n = 1 curvature check: sup |K| of omega-hat away from the innermost annuli

struct CurvatureResidual {
  double sup = 0;
  int excluded_annuli = 0;
  int innermost = 0;
};

inline CurvatureResidual flat_curvature_residual(const CoverProblem& p, const SphereBackground& bg,
                                                 const SolveState& s, int drop = 2) {
  auto K = p.gaussian_curvature(p.hat(s.u));
  auto marked = bg.spec.marked_points();
  std::vector<int> ann(p.size());
  int inner = std::numeric_limits<int>::min();
  for (std::size_t k = 0; k < p.size(); ++k) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& m : marked) d = std::min(d, std::abs(bg.z[k] - m));
    double r = std::pow(d, bg.params.beta);
    ann[k] = r >= 1 ? -1 : annulus_of(r, 1.0);
    inner = std::max(inner, ann[k]);
  }
  CurvatureResidual out;
  out.innermost = inner;
  out.excluded_annuli = drop;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (ann[k] <= inner - drop) out.sup = std::max(out.sup, std::abs(K[k]));
  return out;
}

}  // namespace edgeflat
