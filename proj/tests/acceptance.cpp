// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>

#include "edgeflat/estimates.hpp"

using namespace edgeflat;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void criterion(int id, const std::string& title, double budget, const std::function<void(Verdict&)>& body) {
  Verdict v;
  auto t0 = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [error: " << e.what() << "]";
  }
  double t = seconds_since(t0);
  if (budget > 0) v.require(t < budget, "runtime budget " + std::to_string(budget) + " s");
  failures += !v.pass;
  std::printf("%s %d %s:%s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.str().c_str(), t);
  std::fflush(stdout);
}

ConeGrid disk(double beta, int n_r, int n_theta = 16, int n_tan = 0) {
  ConeGrid g;
  g.beta = beta;
  g.n_r = n_r;
  g.n_theta = n_theta;
  g.n_tan = n_tan;
  return g;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// Max-norm error of the model Laplacian on f(r) cos(m theta), f = r^m exp(-r^2).
double laplacian_error(double beta, int n_r, int m) {
  auto g = disk(beta, n_r);
  auto v = sample(g, [&](double r, double t, double, double) { return cplx(std::pow(r, m) * std::exp(-r * r) * std::cos(m * t)); });
  auto lap = model_laplacian(v);
  double err = 0;
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j) {
      double r = g.r(i);
      double F = std::pow(r, m) * std::exp(-r * r);
      double a = m / r - 2 * r;
      double Fp = a * F, Fpp = (a * a - m / (r * r) - 2) * F;
      double exact = 0.25 * (Fpp + Fp / r - m * m * F / (beta * beta * r * r)) * std::cos(m * g.theta(j));
      err = std::max(err, std::abs(lap.values[g.index(i, j)].real() - exact));
    }
  return err;
}

// Smallest observed order over successive doublings 32 -> 256.
double observed_order(double beta, int m) {
  double order = std::numeric_limits<double>::infinity(), prev = 0;
  for (int n : {32, 64, 128, 256}) {
    double e = laplacian_error(beta, n, m);
    if (prev > 0) order = std::min(order, std::log2(prev / e));
    prev = e;
  }
  return order;
}

struct Cover {
  SphereBackground bg;
  std::optional<CoverProblem> p;
  SolveState s;
  explicit Cover(int n) {
    GeometrySpec spec;
    spec.cover_n = n;
    bg = build_sphere_background(spec, ConeParams{});
    p.emplace(bg);
    s = continuity_solve(*p);
  }
};

GeometrySpec torus_spec() {
  GeometrySpec s;
  s.variant = Variant::cone_torus;
  return s;
}

}  // namespace

int main() {
  criterion(1, "model identity and convergence order", 10, [](Verdict& v) {
    double worst = 0, order = std::numeric_limits<double>::infinity(), odd = order;
    for (double beta : {0.2, 0.25, 1.0 / 3, 0.4}) {
      auto g = disk(beta, 32);
      auto pot = sample(g, [](double r, double, double, double) { return cplx(r * r); });
      for (auto x : model_laplacian(pot).values) worst = std::max(worst, std::abs(x - 1.0));
      // Order on xi-smooth data of the identity's radial class and an even mode.
      order = std::min({order, observed_order(beta, 0), observed_order(beta, 2)});
      odd = std::min(odd, observed_order(beta, 1));
    }
    v.detail << " max |Delta |zeta|^{2b} - 1| = " << worst << ", order " << order
             << " (odd modes, informational: " << odd << ")";
    v.require(worst < 1e-8, "identity to 1e-8");
    v.require(order >= 3, "order >= 3");
  });

  criterion(2, "vanishing at the cone point over the 12-function corpus", 120, [](Verdict& v) {
    auto g = disk(1.0 / 3, 4096);
    int passed = 0, total = 0;
    double min_exp = std::numeric_limits<double>::infinity();
    for (const auto& c : holder_corpus(0.5)) {
      auto fit = check_vanishing_at_cone(solve_model_poisson(corpus_field(g, c)).v, c.id);
      ++total;
      passed += fit.pass;
      if (!fit.exact_zero) min_exp = std::min(min_exp, fit.exponent);
      v.require(fit.pass, c.id);
    }
    v.detail << " " << passed << "/" << total << " pass, smallest exponent " << min_exp;
  });

  criterion(3, "Schauder constant stable under refinement", 0, [](Verdict& v) {
    for (double beta : {1.0 / 3, 0.25}) {
      auto g = disk(beta, 64, 16, 4);
      double coarse = 0, fine = 0;
      for (const auto& c : holder_corpus(0.5)) {
        coarse = std::max(coarse, schauder_ratio(corpus_field(g, c), 0.5).ratio);
        fine = std::max(fine, schauder_ratio(corpus_field(g.refined(), c), 0.5).ratio);
      }
      auto r = refinement_check("schauder", coarse, fine, 0.10);
      v.detail << " beta " << beta << ": " << coarse << " -> " << fine << " (" << 100 * r.change << "%)";
      v.require(r.pass, "beta " + std::to_string(beta));
    }
  });

  criterion(4, "curvature and derivative decay", 0, [](Verdict& v) {
    for (double b : {0.25, 1.0 / 3, 0.45}) {
      ConeParams p;
      p.beta = b;
      auto s = curvature_derivative_scan(ConeTorusModel(torus_spec(), p));
      v.detail << " beta " << b << ": R " << s.R.exponent << ", DR " << s.DR.exponent << " (>= "
               << dr_envelope(b) - 0.2 << ")";
      v.require(s.R.exponent >= -0.05, "R at beta " + std::to_string(b));
      v.require(s.DR.exponent >= dr_envelope(b) - 0.2, "DR at beta " + std::to_string(b));
    }
  });

  criterion(5, "n = 1 end-to-end on the marked sphere", 120, [](Verdict& v) {
    Cover c(48);
    auto& p = *c.p;
    double exact = max_diff(c.s.u, dim1_exact_solve(p, 1.0).u);
    double curv = flat_curvature_residual(p, c.bg, c.s).sup;
    double bracket = 0, volume = 0;
    for (const auto& r : c.s.steps) {
      bracket = std::max({bracket, r.tF_min - r.c, r.c - r.tF_max});
      volume = std::max(volume, r.volume_error);
    }
    v.detail << " |u - u_exact| " << exact << ", curvature " << curv << ", bracket violation " << bracket
             << ", volume error " << volume << ", steps " << c.s.steps.size();
    v.require(c.s.t == 1, "reached t = 1");
    v.require(exact < 1e-8, "exact solve to 1e-8");
    v.require(curv < 1e-5, "curvature off the rim below 1e-5");
    v.require(bracket <= 1e-14, "c bracket at every t");
    v.require(volume < 1e-10, "volume conserved");
  });

  criterion(6, "n = 2 manufactured solution on 64 x 32 x 32^2", 900, [](Verdict& v) {
    auto mc = make_manufactured_cell(torus_spec(), ConeParams{}, disk(1.0 / 3, 64, 32, 32));
    auto s = continuity_solve(mc.problem);
    double err = max_diff(s.u, mc.u_star);
    double floor = newton_floor(mc.problem);
    auto q = quadratic_contraction(s.histories, 1e-2, floor_margin * floor);
    v.detail << " |u - u*| " << err << ", contraction K " << q.K << " over " << q.pairs << " pairs above "
             << floor_margin << " x floor " << floor;
    v.require(err < 1e-6, "recovery to 1e-6");
    v.require(q.pass, "quadratic contraction");
  });

  criterion(7, "estimate suite on the solved n = 1 state (cover 288 and 576)", 0, [](Verdict& v) {
    Cover a(288), b(576);
    auto cmp = compare_cover_estimates(cover_estimates(*a.p, a.bg, a.s), cover_estimates(*b.p, b.bg, b.s));
    const auto& c = cmp.coarse;
    const auto& f = cmp.fine;
    v.require(c.c0.nodes.size() == 20 && c.c0.pass, "c0 at 20 points");
    for (const auto& r : cmp.checks) {
      v.detail << " " << r.name << " " << 100 * r.change << "%";
      if (r.name != "c0.oscillation") v.require(r.pass, r.name);
    }
    v.require(c.third.S_peak.off_rim && f.third.S_peak.off_rim, "S off the rim");
    v.require(c.third.Q_peak.off_rim && f.third.Q_peak.off_rim, "Q off the rim");
    for (const auto* e : {&c, &f}) {
      v.require(e->third.covariant_b.pass, "covariant.derivatives.b fit");
      v.require(e->third.s_holder.pass, "S.Holder fit");
    }
    v.detail << ", cov.b " << c.third.covariant_b.exponent << ", S.Holder " << c.third.s_holder.exponent
             << ", S annulus " << f.third.S_peak.annulus << ", Q annulus " << f.third.Q_peak.annulus << " of "
             << cover_rims(b.bg).innermost;
    // psi_l lives on the n = 2 cell.
    ConeParams prm;
    auto mc = make_manufactured_cell(torus_spec(), prm, disk(prm.beta, 64, 16, 8));
    auto lip = lipschitz_second_derivative_check(mc.problem, mc.u_star, prm);
    v.detail << ", psi " << lip.psi_decay.exponent;
    v.require(lip.psi_decay.exponent >= prm.beta - 0.1, "psi_l exponent");
  });

  criterion(8, "appendix decay on 6 corpus functions and hypothesis gate", 60, [](Verdict& v) {
    ConeParams prm;
    auto corpus = holder_corpus(prm.alpha);
    auto g = disk(prm.beta, 4096);
    double min_exp = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 6; ++k) {
      auto fit = appendix_decay_check(corpus_field(g, corpus[k]), prm);
      min_exp = std::min(min_exp, fit.exponent);
      v.require(!fit.exact_zero && fit.exponent >= prm.alpha * prm.beta - 0.1, corpus[k].id);
    }
    v.detail << " smallest exponent " << min_exp << " (>= " << prm.alpha * prm.beta - 0.1 << ")";
    ConeParams bad;
    bad.beta = 0.45;
    bool refused = false;
    try {
      appendix_decay_check(corpus_field(disk(bad.beta, 256), corpus[1]), bad);
    } catch (const HypothesisError&) {
      refused = true;
    }
    v.require(refused, "gate refuses alpha beta >= 1 - 2 beta");
    v.detail << ", gate " << (refused ? "refuses" : "accepts") << " beta 0.45";
  });

  criterion(9, "kernel dimension of the discrete Laplacians", 0, [](Verdict& v) {
    auto round = kernel_dimension_round_sphere(SphereGrid{16, 32});
    Cover c(24);
    auto& p = *c.p;
    MetricField g0;
    g0.n = 1;
    g0.frame = Frame::psi;
    g0.g11 = c.bg.G0;
    auto k0 = kernel_dimension(p, g0);
    auto k = kernel_dimension(p, p.background());
    auto kh = kernel_dimension(p, p.hat(c.s.u));
    const std::pair<const char*, KernelReport*> all[] = {
        {"omega_0 (round)", &round}, {"omega_0 (cover)", &k0}, {"omega", &k}, {"omega-hat", &kh}};
    for (const auto& [name, r] : all) {
      v.detail << " " << name << ": dim " << r->dimension << " gap " << r->gap << ";";
      v.require(r->dimension == 1 && r->gap >= 1e3, name);
    }
  });

  criterion(10, "negative controls fail", 0, [](Verdict& v) {
    int controls = 0;
    auto expect_fail = [&](bool passed, const std::string& name) {
      ++controls;
      v.require(!passed, name + " should fail");
    };
    auto g = disk(1.0 / 3, 1024);
    auto re_xi = sample(g, [](double r, double t, double, double) { return cplx(r * std::cos(t)); });
    expect_fail(check_vanishing_at_cone(re_xi).pass, "Re xi vanishing");
    GeometrySpec spec;
    spec.cover_n = 48;
    auto bg = build_sphere_background(spec, ConeParams{});
    expect_fail(barrier_check(bg, 10.0).pass, "cover barrier eps = 10");
    ConeParams prm;
    ConeTorusModel model(torus_spec(), prm);
    expect_fail(barrier_check(model, disk(prm.beta, 32, 16, 8), 10.0).pass, "cell barrier eps = 10");
    CoverProblem p(bg);
    auto s = continuity_solve(p);
    auto big = s.u;
    for (auto& x : big) x *= 1e3;
    expect_fail(c0_check(bg, big).pass, "c0 on 1e3 u");
    auto trivial = initial_state(p);
    trivial.t = 1;
    expect_fail(final_curvature_check(p, bg, trivial).pass, "curvature of the unsolved metric");
    expect_fail(quadratic_contraction({{1e-3, 5e-4, 2.5e-4, 1.25e-4}}).pass, "linear Newton history");
    auto tent_cos = sample(disk(1.0 / 3, 4096), [](double r, double t, double, double) {
      return cplx(std::max(0.0, 1 - 2 * r) * std::cos(t));
    });
    expect_fail(appendix_decay_check(tent_cos, prm).pass, "appendix decay of tent cos");
    // The barrier is what moves the peak of H off the rim once the rim is resolved.
    Cover hi(576);
    expect_fail(laplacian_bound_check(*hi.p, hi.bg, hi.s.u, 1, 0.0, prm.eps()).pass, "Laplacian peak without barrier");
    v.detail << " " << controls << " controls";
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
