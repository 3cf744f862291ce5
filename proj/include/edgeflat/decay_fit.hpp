#pragma once
// Log-log regression of per-annulus maxima over dyadic annuli
// R 2^{-j-1} < r <= R 2^{-j}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edgeflat/common.hpp"

namespace edgeflat {

struct DecayFit {
  std::string quantity;
  std::string scale = "r";  // variable on the log axis: r, |zeta| or |z_n|
  std::vector<int> annuli;
  std::vector<double> inner, outer, maxima;
  std::vector<double> at;  // radius where each annulus maximum is attained
  std::vector<int> excluded;  // annuli dropped next to the cone point
  double exponent = 0;
  double intercept = 0;
  double std_error = 0;
  double threshold = -std::numeric_limits<double>::infinity();
  bool exact_zero = false;
  bool pass = false;
  // Optional limit at the cone point (vanishing checks).
  double limit = std::numeric_limits<double>::quiet_NaN();
  double limit_tolerance = std::numeric_limits<double>::quiet_NaN();

  int used() const { return int(annuli.size()); }
  // Global max over the annuli that enter the fit.
  double max_value() const {
    double m = 0;
    for (double v : maxima) m = std::max(m, v);
    return m;
  }
};

struct FitOptions {
  double radius = 1.0;
  double scale_power = 1.0;  // log axis uses r^scale_power
  std::string scale = "r";
  int drop_inner = 2;
  int min_annuli = 4;
  double r_min = 0;  // radii below are ignored
  double zero_tol = 1e-300;
  double threshold = -std::numeric_limits<double>::infinity();
};

// Radii r and values are parallel samples; log of the max of |value| per
// annulus is regressed against log of the radius where that max is attained.
inline DecayFit fit_decay(const std::string& name, std::span<const double> r,
                          std::span<const double> value, const FitOptions& opt) {
  std::map<int, std::pair<double, double>> best;  // annulus -> (max, radius)
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (r[k] <= opt.r_min || r[k] > opt.radius) continue;
    int j = int(std::floor(std::log2(opt.radius / r[k])));
    double v = std::abs(value[k]);
    auto it = best.find(j);
    if (it == best.end()) best[j] = {v, r[k]};
    else if (v > it->second.first) it->second = {v, r[k]};
  }
  DecayFit fit;
  fit.quantity = name;
  fit.scale = opt.scale;
  fit.threshold = opt.threshold;
  std::vector<int> js;
  for (auto& [j, v] : best) js.push_back(j);
  // largest j is innermost
  std::sort(js.begin(), js.end(), std::greater<int>());
  int drop = std::min<int>(opt.drop_inner, int(js.size()));
  fit.excluded.assign(js.begin(), js.begin() + drop);
  std::vector<int> keep(js.begin() + drop, js.end());
  std::sort(keep.begin(), keep.end());
  if (int(keep.size()) < opt.min_annuli)
    throw ResolutionError("insufficient annuli for decay fit of " + name + ": " +
                          std::to_string(keep.size()));
  for (int j : keep) {
    fit.annuli.push_back(j);
    fit.outer.push_back(opt.radius * std::ldexp(1.0, -j));
    fit.inner.push_back(opt.radius * std::ldexp(1.0, -j - 1));
    fit.maxima.push_back(best[j].first);
    fit.at.push_back(best[j].second);
  }
  double top = fit.max_value();
  if (top <= opt.zero_tol) {
    fit.exact_zero = true;
    fit.pass = true;
    return fit;
  }
  int n = fit.used();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> xs(n), ys(n);
  for (int k = 0; k < n; ++k) {
    xs[k] = opt.scale_power * std::log(fit.at[k]);
    ys[k] = std::log(std::max(fit.maxima[k], top * 1e-300));
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    sxy += xs[k] * ys[k];
  }
  double den = n * sxx - sx * sx;
  fit.exponent = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.exponent * sx) / n;
  double ss = 0;
  for (int k = 0; k < n; ++k) {
    double e = ys[k] - (fit.intercept + fit.exponent * xs[k]);
    ss += e * e;
  }
  if (n > 2) fit.std_error = std::sqrt(ss / (n - 2) * n / den);
  fit.pass = fit.exponent >= fit.threshold;
  return fit;
}

}  // namespace edgeflat
