#pragma once
// Run configuration, orchestration and reproducible manifests for the
// command-line tool. Every subcommand reads a RunConfig, writes CSV data and
// one JSON manifest into the output directory, and returns an exit status:
// 0 all checks pass, 1 some check fails, 2 a phase raised an error.

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <Eigen/Core>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "edgeflat/estimates.hpp"
#include "json.hpp"

namespace edgeflat {

inline constexpr const char* edgeflat_version = "1.0.0";

struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration

struct CheckThreshold {
  std::string name;
  double threshold = 0;
};

struct GridSizes {
  int n_r = 32;
  int n_theta = 16;
  int n_tan = 0;
  double radius = 1.0;
};

struct ContinuitySettings {
  double initial_dt = 0.1;
  double newton_tol = 1e-10;
  int max_halvings = 30;
};

// How a measured value is compared with its threshold.
enum class Relation { less, less_equal, greater, greater_equal, equal };

struct CheckSpec {
  std::string name;
  Relation relation;
  double threshold;
  std::string meaning;
};

// Every check the runner can evaluate, with its default threshold. Checks
// whose default depends on the parameters (decay exponents) are resolved in
// default_threshold.
inline const std::vector<CheckSpec>& check_catalog() {
  using R = Relation;
  static const std::vector<CheckSpec> c = {
      {"background.ricci_residual", R::less, 1e-6, "sup |Ric - i ddbar F|_g on the cover"},
      {"background.christoffel_remainder", R::greater, 0, "decay exponent of the weighted Christoffel remainder"},
      {"background.curvature", R::greater_equal, -0.05, "decay exponent of |R|_g"},
      {"background.curvature_derivative", R::greater_equal, NAN, "decay exponent of |DR|_g, default envelope - 0.2"},
      {"background.metric_envelopes", R::equal, 0, "number of metric derivative envelopes that fail"},
      {"background.min_det", R::greater, 0, "smallest determinant of the edge metric"},
      {"solve.residual", R::less, 1e-8, "sup norm of the Monge-Ampere residual at t = 1"},
      {"solve.exact_match", R::less, 1e-8, "sup |u - u_exact| against the linear n = 1 solve"},
      {"solve.manufactured_error", R::less, 1e-6, "sup |u - u*| on the manufactured cell"},
      {"solve.c_bracket", R::less_equal, 1e-14, "largest violation of inf tF <= c <= sup tF"},
      {"solve.volume", R::less, 1e-10, "largest relative volume error over accepted steps"},
      {"solve.curvature", R::less, 1e-5, "Gaussian curvature of the solved metric off the rim"},
      {"solve.quadratic_contraction", R::less_equal, 1e2, "Newton constant K in r_{k+1} <= K r_k^2"},
      {"verify.c0", R::greater_equal, 0, "smallest margin of the C0 bound over the sample points"},
      {"verify.barrier", R::greater_equal, -1e-10, "smallest eigenvalue of the barrier form"},
      {"verify.laplacian_peak", R::greater_equal, 1, "annuli between the peak of H and the excluded rim"},
      {"verify.S_peak", R::greater_equal, 1, "annuli between the peak of S and the excluded rim"},
      {"verify.Q_peak", R::greater_equal, 1, "annuli between the peak of Q and the excluded rim"},
      {"verify.covariant_b", R::greater_equal, NAN, "decay exponent of the covariant third derivative, default alpha beta - 0.1"},
      {"verify.S_holder", R::greater_equal, NAN, "decay exponent of |S - S(cone)|, default alpha beta - 0.1"},
      {"verify.psi_decay", R::greater_equal, NAN, "decay exponent of psi, default beta - 0.1"},
      {"verify.moser", R::less, 1e-8, "relative error of the Moser energy identity"},
      {"verify.final_curvature", R::less, 1e-5, "curvature residual of the solved metric off the rim"},
      {"verify.refine.c0_oscillation", R::less, 0.10, "relative change of osc u under refinement"},
      {"verify.refine.a1", R::less, 0.05, "relative change of the lower eigenvalue bound"},
      {"verify.refine.a2", R::less, 0.05, "relative change of the upper eigenvalue bound"},
      {"verify.refine.sobolev", R::less, 0.10, "relative change of the largest Sobolev ratio"},
      {"verify.refine.S_max", R::less, 0.10, "relative change of max S"},
      {"verify.refine.Q_max", R::less, 0.10, "relative change of max Q"},
      {"model.identity", R::less, 1e-8, "sup |v - (r^2 - 1)| for the constant right-hand side"},
      {"model.cone_potential", R::less, 1e-8, "sup |Delta |zeta|^{2 beta} - 1|"},
      {"model.vanishing", R::greater, 0, "decay exponent of |d_xi v| per corpus solve"},
      {"schauder.refinement", R::less, 0.10, "relative change of the corpus maximum ratio"},
      {"appendix.decay", R::greater_equal, NAN, "decay exponent of the appendix quantity, default alpha beta - 0.1"},
  };
  return c;
}

inline const CheckSpec& check_spec(const std::string& name) {
  for (const auto& c : check_catalog())
    if (c.name == name) return c;
  throw ValidationError("unknown check '" + name + "'");
}

struct RunConfig {
  ConeParams params;
  GeometrySpec geometry;
  GridSizes grid;
  ContinuitySettings continuity;
  std::vector<CheckThreshold> checks;  // overrides of catalog thresholds
  std::uint64_t seed = 1;
  std::string output_dir = "edgeflat-out";

  void validate() const {
    geometry.validate(params);
    cone_grid().validate();
    if (!(continuity.initial_dt > 0 && continuity.initial_dt <= 1))
      throw ValidationError("continuity.initial_dt must lie in (0, 1]");
    if (!(continuity.newton_tol > 0 && continuity.newton_tol < 1))
      throw ValidationError("continuity.newton_tol must lie in (0, 1)");
    if (continuity.max_halvings < 0 || continuity.max_halvings > 60)
      throw ValidationError("continuity.max_halvings must lie in [0, 60]");
    if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
    std::set<std::string> seen;
    for (const auto& c : checks) {
      check_spec(c.name);
      if (!std::isfinite(c.threshold)) throw ValidationError("threshold of '" + c.name + "' must be finite");
      if (!seen.insert(c.name).second) throw ValidationError("check '" + c.name + "' listed twice");
    }
  }

  ConeGrid cone_grid() const {
    ConeGrid g;
    g.beta = params.beta;
    g.n_r = grid.n_r;
    g.n_theta = grid.n_theta;
    g.n_tan = grid.n_tan;
    g.radius = grid.radius;
    g.period = geometry.period;
    return g;
  }

  // max_halvings bounds the Newton line search.
  ContinuityOptions continuity_options() const {
    ContinuityOptions o;
    o.initial_dt = continuity.initial_dt;
    o.newton_tol = continuity.newton_tol;
    o.max_halvings = continuity.max_halvings;
    return o;
  }

  double default_threshold(const std::string& name) const {
    const auto& s = check_spec(name);
    if (!std::isnan(s.threshold)) return s.threshold;
    double ab = params.alpha * params.beta;
    if (name == "background.curvature_derivative") return dr_envelope(params.beta) - 0.2;
    if (name == "verify.psi_decay") return params.beta - 0.1;
    return ab - 0.1;
  }

  double threshold(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c.threshold;
    return default_threshold(name);
  }
};

namespace detail {

using json = nlohmann::ordered_json;

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw ValidationError("");
      auto v = it->template get<std::int64_t>();
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw ValidationError("");
      out = int(v);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw ValidationError("");
      out = it->template get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ValidationError("");
      out = it->template get<double>();
    } else {
      if (!it->is_string()) throw ValidationError("");
      out = it->template get<std::string>();
    }
  } catch (const ValidationError&) {
    throw ValidationError(where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  using json = nlohmann::ordered_json;
  json marked = json::array();
  for (cplx m : c.geometry.marked) marked.push_back({m.real(), m.imag()});
  json checks = json::array();
  for (const auto& t : c.checks) checks.push_back({{"name", t.name}, {"threshold", t.threshold}});
  return {
      {"params",
       {{"beta", c.params.beta},
        {"alpha", c.params.alpha},
        {"lambda", c.params.lambda},
        {"epsilon", c.params.epsilon},
        {"L", c.params.L},
        {"kappa", c.params.kappa}}},
      {"geometry",
       {{"variant", variant_name(c.geometry.variant)},
        {"k", c.geometry.k},
        {"marked", marked},
        {"cover_n", c.geometry.cover_n},
        {"rho", c.geometry.rho},
        {"period", c.geometry.period}}},
      {"grid", {{"n_r", c.grid.n_r}, {"n_theta", c.grid.n_theta}, {"n_tan", c.grid.n_tan}, {"radius", c.grid.radius}}},
      {"continuity",
       {{"initial_dt", c.continuity.initial_dt},
        {"newton_tol", c.continuity.newton_tol},
        {"max_halvings", c.continuity.max_halvings}}},
      {"checks", checks},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

// Strict: unknown keys and wrong types are rejected; absent keys keep their
// defaults; the result is validated.
inline RunConfig config_from_json(const nlohmann::ordered_json& j) {
  using detail::read;
  RunConfig c;
  detail::reject_unknown(j, "config", {"params", "geometry", "grid", "continuity", "checks", "seed", "output_dir"});
  if (auto it = j.find("params"); it != j.end()) {
    detail::reject_unknown(*it, "params", {"beta", "alpha", "lambda", "epsilon", "L", "kappa"});
    read(*it, "beta", "params", c.params.beta);
    read(*it, "alpha", "params", c.params.alpha);
    read(*it, "lambda", "params", c.params.lambda);
    read(*it, "epsilon", "params", c.params.epsilon);
    read(*it, "L", "params", c.params.L);
    read(*it, "kappa", "params", c.params.kappa);
  }
  if (auto it = j.find("geometry"); it != j.end()) {
    detail::reject_unknown(*it, "geometry", {"variant", "k", "marked", "cover_n", "rho", "period"});
    std::string v = variant_name(c.geometry.variant);
    read(*it, "variant", "geometry", v);
    if (v == "p1_marked") c.geometry.variant = Variant::p1_marked;
    else if (v == "cone_torus") c.geometry.variant = Variant::cone_torus;
    else throw ValidationError("geometry.variant must be p1_marked or cone_torus");
    read(*it, "k", "geometry", c.geometry.k);
    read(*it, "cover_n", "geometry", c.geometry.cover_n);
    read(*it, "period", "geometry", c.geometry.period);
    if (auto m = it->find("marked"); m != it->end()) {
      if (!m->is_array()) throw ValidationError("geometry.marked must be a list of [re, im] pairs");
      for (const auto& p : *m) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
          throw ValidationError("geometry.marked must be a list of [re, im] pairs");
        c.geometry.marked.emplace_back(p[0].get<double>(), p[1].get<double>());
      }
    }
    if (auto r = it->find("rho"); r != it->end()) {
      if (!r->is_array() || r->size() != 5) throw ValidationError("geometry.rho must hold 5 numbers");
      for (int k = 0; k < 5; ++k) {
        if (!(*r)[k].is_number()) throw ValidationError("geometry.rho must hold 5 numbers");
        c.geometry.rho[k] = (*r)[k].get<double>();
      }
    }
  }
  if (auto it = j.find("grid"); it != j.end()) {
    detail::reject_unknown(*it, "grid", {"n_r", "n_theta", "n_tan", "radius"});
    read(*it, "n_r", "grid", c.grid.n_r);
    read(*it, "n_theta", "grid", c.grid.n_theta);
    read(*it, "n_tan", "grid", c.grid.n_tan);
    read(*it, "radius", "grid", c.grid.radius);
  }
  if (auto it = j.find("continuity"); it != j.end()) {
    detail::reject_unknown(*it, "continuity", {"initial_dt", "newton_tol", "max_halvings"});
    read(*it, "initial_dt", "continuity", c.continuity.initial_dt);
    read(*it, "newton_tol", "continuity", c.continuity.newton_tol);
    read(*it, "max_halvings", "continuity", c.continuity.max_halvings);
  }
  if (auto it = j.find("checks"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("checks must be a list");
    for (const auto& e : *it) {
      detail::reject_unknown(e, "checks entry", {"name", "threshold"});
      if (!e.contains("name") || !e.contains("threshold"))
        throw ValidationError("checks entries need a name and a threshold");
      CheckThreshold t;
      read(e, "name", "checks", t.name);
      read(e, "threshold", "checks", t.threshold);
      c.checks.push_back(t);
    }
  }
  read(j, "seed", "config", c.seed);
  read(j, "output_dir", "config", c.output_dir);
  c.validate();
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

inline RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ValidationError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Deterministic text output

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StateError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) { row_strings(header); }
  void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }
  void row(std::span<const double> values) {
    if (values.size() != columns_) throw std::logic_error("csv row width mismatch");
    std::vector<std::string> s;
    for (double v : values) s.push_back(format_number(v));
    row_strings(s);
  }
  void row_strings(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row width mismatch");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) text_ += ',';
      text_ += cells[k];
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

// Cone-grid field in storage order [r][theta][x][y].
inline CsvTable cone_field_csv(const ConeGrid& g, std::span<const cplx> v, bool real) {
  std::vector<std::string> h{"r", "theta"};
  if (g.n_tan) {
    h.push_back("x");
    h.push_back("y");
  }
  if (real) h.push_back("value");
  else {
    h.push_back("re");
    h.push_back("im");
  }
  CsvTable t(h);
  int T = g.n_tan ? g.n_tan : 1;
  std::vector<double> row;
  for (int i = 0; i < g.n_r; ++i)
    for (int j = 0; j < g.n_theta; ++j)
      for (int a = 0; a < T; ++a)
        for (int b = 0; b < T; ++b) {
          cplx x = v[g.index(i, j, a, b)];
          row = {g.r(i), g.theta(j)};
          if (g.n_tan) {
            row.push_back(g.tan(a));
            row.push_back(g.tan(b));
          }
          row.push_back(x.real());
          if (!real) row.push_back(x.imag());
          t.row(row);
        }
  return t;
}

inline CsvTable cone_field_csv(const ConeGrid& g, std::span<const double> v) {
  std::vector<cplx> c(v.begin(), v.end());
  return cone_field_csv(g, c, true);
}

// Cover field in node order; r = |z - p|^beta and theta = arg(z - p) for the
// nearest marked point p.
inline CsvTable cover_field_csv(const SphereBackground& bg, std::span<const double> v) {
  CsvTable t({"r", "theta", "value"});
  auto marked = bg.spec.marked_points();
  for (std::size_t k = 0; k < v.size(); ++k) {
    cplx best = bg.z[k] - marked[0];
    for (const auto& m : marked)
      if (std::abs(bg.z[k] - m) < std::abs(best)) best = bg.z[k] - m;
    t.row({std::pow(std::abs(best), bg.params.beta), std::arg(best), v[k]});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Manifest serialization of reports

inline nlohmann::ordered_json to_json(const DecayFit& f) {
  using json = nlohmann::ordered_json;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(format_number(v)); };
  json annuli = json::array();
  for (std::size_t k = 0; k < f.annuli.size(); ++k)
    annuli.push_back({{"annulus", f.annuli[k]},
                      {"inner", f.inner[k]},
                      {"outer", f.outer[k]},
                      {"max", f.maxima[k]},
                      {"at", f.at[k]}});
  return {{"quantity", f.quantity}, {"scale", f.scale},         {"exponent", num(f.exponent)},
          {"intercept", num(f.intercept)}, {"std_error", num(f.std_error)}, {"threshold", num(f.threshold)},
          {"exact_zero", f.exact_zero},    {"pass", f.pass},            {"limit", num(f.limit)},
          {"limit_tolerance", num(f.limit_tolerance)}, {"excluded", f.excluded}, {"annuli", annuli}};
}

inline nlohmann::ordered_json to_json(const Peak& p) {
  return {{"value", p.value}, {"node", p.node}, {"annulus", p.annulus}, {"radius", p.radius}, {"off_rim", p.off_rim}};
}

// ---------------------------------------------------------------------------
// One run of one subcommand

class Run {
 public:
  using json = nlohmann::ordered_json;

  Run(std::string subcommand, RunConfig cfg, std::filesystem::path out, std::map<std::string, std::string> versions = {})
      : sub_(std::move(subcommand)), cfg_(std::move(cfg)), out_(std::move(out)), extra_versions_(std::move(versions)) {
    std::filesystem::create_directories(out_);
  }

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& out() const { return out_; }

  // Runs f as a named phase. Errors are recorded with the phase name and
  // stop nothing but the phase itself; the return value says whether it
  // completed.
  template <class F>
  bool phase(const std::string& name, F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    json rec{{"name", name}};
    bool ok = true;
    try {
      f();
      rec["status"] = "ok";
    } catch (const std::exception& e) {
      ok = false;
      rec["status"] = "error";
      rec["error_type"] = error_type(e);
      rec["message"] = e.what();
      errors_.push_back(name + ": " + e.what());
    }
    rec["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    phases_.push_back(rec);
    return ok;
  }

  void skip(const std::string& name, const std::string& reason) {
    phases_.push_back({{"name", name}, {"status", "skipped"}, {"message", reason}, {"seconds", 0.0}});
  }

  // Scalar check against a catalog threshold (possibly overridden).
  bool check(const std::string& name, double value, const std::string& label = {}) {
    const auto& s = check_spec(name);
    double thr = cfg_.threshold(name);
    bool pass = false;
    switch (s.relation) {
      case Relation::less: pass = value < thr; break;
      case Relation::less_equal: pass = value <= thr; break;
      case Relation::greater: pass = value > thr; break;
      case Relation::greater_equal: pass = value >= thr; break;
      case Relation::equal: pass = value == thr; break;
    }
    record(name, label, value, thr, s.relation, pass);
    return pass;
  }

  // Decay-fit check: the fitted exponent against the threshold; an exactly
  // vanishing quantity passes, and an extrapolated limit must stay below its
  // tolerance.
  bool check_fit(const std::string& name, const DecayFit& f, const std::string& label = {}) {
    fit(f, label.empty() ? name : label);
    const auto& s = check_spec(name);
    double thr = cfg_.threshold(name);
    bool limit_ok = std::isnan(f.limit) || f.limit < f.limit_tolerance;
    bool exponent_ok = s.relation == Relation::greater ? f.exponent > thr : f.exponent >= thr;
    bool pass = f.exact_zero || (exponent_ok && limit_ok);
    record(name, label, f.exponent, thr, s.relation, pass);
    return pass;
  }

  void fit(const DecayFit& f, const std::string& label) {
    json j = to_json(f);
    j["label"] = label;
    fits_.push_back(j);
  }

  void report(const std::string& name, json data) { reports_.push_back({{"name", name}, {"data", std::move(data)}}); }

  void note(const std::string& name, const std::string& status, const std::string& reason) {
    reports_.push_back({{"name", name}, {"status", status}, {"reason", reason}});
  }

  void write(const std::string& file, const std::string& text) {
    auto p = out_ / file;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
    f.close();
    if (!f) throw std::runtime_error("write failed for " + p.string());
    files_[file] = sha256_hex(text);
    sizes_[file] = text.size();
  }
  void write(const std::string& file, const CsvTable& t) { write(file, t.text()); }

  bool failed_checks() const {
    for (const auto& c : checks_)
      if (!c["pass"].get<bool>()) return true;
    return false;
  }
  bool has_errors() const { return !errors_.empty(); }

  json manifest() const {
    json files = json::array();
    for (const auto& [name, sum] : files_) files.push_back({{"path", name}, {"bytes", sizes_.at(name)}, {"sha256", sum}});
    json checks = json::object();
    for (const auto& c : checks_) checks[c["id"].get<std::string>()] = c["pass"];
    return {{"tool", "edgeflat"},
            {"subcommand", sub_},
            {"config", config_to_json(cfg_)},
            {"versions", versions()},
            {"phases", phases_},
            {"fits", fits_},
            {"reports", reports_},
            {"checks", checks_},
            {"pass_fail", checks},
            {"errors", errors_},
            {"pass", !has_errors() && !failed_checks()},
            {"files", files}};
  }

  std::string manifest_name() const { return sub_ + ".manifest.json"; }

  // Writes the manifest and returns the exit status.
  int finish() {
    auto text = manifest().dump(2) + "\n";
    std::ofstream f(out_ / manifest_name(), std::ios::binary | std::ios::trunc);
    f << text;
    for (const auto& e : errors_) std::cerr << "edgeflat " << sub_ << ": " << e << "\n";
    for (const auto& c : checks_)
      if (!c["pass"].get<bool>()) std::cerr << "edgeflat " << sub_ << ": check failed: " << c["id"].get<std::string>() << "\n";
    if (has_errors()) return 2;
    return failed_checks() ? 1 : 0;
  }

 private:
  static std::string error_type(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
    if (dynamic_cast<const ResolutionError*>(&e)) return "ResolutionError";
    if (dynamic_cast<const SingularPointError*>(&e)) return "SingularPointError";
    if (dynamic_cast<const SolverError*>(&e)) return "SolverError";
    if (dynamic_cast<const HypothesisError*>(&e)) return "HypothesisError";
    if (dynamic_cast<const StateError*>(&e)) return "StateError";
    return "Error";
  }

  static const char* relation_name(Relation r) {
    switch (r) {
      case Relation::less: return "<";
      case Relation::less_equal: return "<=";
      case Relation::greater: return ">";
      case Relation::greater_equal: return ">=";
      case Relation::equal: return "==";
    }
    return "?";
  }

  void record(const std::string& name, const std::string& label, double value, double thr, Relation rel, bool pass) {
    std::string id = label.empty() ? name : name + "[" + label + "]";
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(format_number(v)); };
    checks_.push_back({{"id", id},
                       {"check", name},
                       {"value", num(value)},
                       {"relation", relation_name(rel)},
                       {"threshold", num(thr)},
                       {"pass", pass},
                       {"meaning", check_spec(name).meaning}});
  }

  json versions() const {
    json v{{"edgeflat", edgeflat_version},
           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                         std::to_string(EIGEN_MINOR_VERSION)},
           {"fftw", std::string(fftw_version)},
           {"openssl", std::string(OpenSSL_version(OPENSSL_VERSION))},
           {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
           {"compiler", __VERSION__}};
    for (const auto& [k, s] : extra_versions_) v[k] = s;
    return v;
  }

  std::string sub_;
  RunConfig cfg_;
  std::filesystem::path out_;
  std::map<std::string, std::string> extra_versions_;
  json phases_ = json::array(), fits_ = json::array(), reports_ = json::array(), checks_ = json::array();
  std::vector<std::string> errors_;
  std::map<std::string, std::string> files_;
  std::map<std::string, std::size_t> sizes_;
};

// ---------------------------------------------------------------------------
// Persisted solver state shared by solve and verify

inline constexpr const char* state_file = "state.json";

inline std::string state_to_text(const RunConfig& cfg, const SolveState& s) {
  nlohmann::ordered_json j{{"variant", variant_name(cfg.geometry.variant)},
                           {"size", s.u.size()},
                           {"t", s.t},
                           {"c", s.c},
                           {"normalization", s.normalization},
                           {"u", s.u}};
  return j.dump() + "\n";
}

inline SolveState load_state(const std::filesystem::path& dir, const RunConfig& cfg, std::size_t expected) {
  auto p = dir / state_file;
  if (!std::filesystem::exists(p))
    throw StateError("missing state: " + p.string() + " not found; run `edgeflat solve` with this config first");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw StateError("corrupt state file " + p.string() + ": " + e.what());
  }
  SolveState s;
  try {
    if (j.at("variant").get<std::string>() != variant_name(cfg.geometry.variant))
      throw StateError("state was solved for another geometry variant");
    s.t = j.at("t").get<double>();
    s.c = j.at("c").get<double>();
    s.normalization = j.at("normalization").get<double>();
    s.u = j.at("u").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw StateError("corrupt state file " + p.string() + ": " + e.what());
  }
  if (s.u.size() != expected)
    throw StateError("state has " + std::to_string(s.u.size()) + " nodes but the config grid has " +
                     std::to_string(expected));
  return s;
}

// ---------------------------------------------------------------------------
// Subcommands

namespace pipeline {

using json = nlohmann::ordered_json;

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline json kernel_json(const KernelReport& k) {
  return {{"dimension", k.dimension}, {"largest", k.largest}, {"smallest", k.smallest}, {"gap", k.gap}};
}

inline void background(Run& run) {
  const auto& cfg = run.config();
  if (cfg.geometry.variant == Variant::p1_marked) {
    SphereBackground bg;
    if (!run.phase("build", [&] { bg = build_sphere_background(cfg.geometry, cfg.params); })) return;
    run.phase("ricci_potential", [&] {
      auto res = ricci_residual(bg);
      run.check("background.ricci_residual", *std::max_element(res.begin(), res.end()));
      run.write("background_density.csv", cover_field_csv(bg, bg.G));
      run.write("ricci_potential.csv", cover_field_csv(bg, bg.F));
      run.write("curvature.csv", cover_field_csv(bg, bg.K));
    });
    run.phase("christoffel_scan", [&] {
      run.check_fit("background.christoffel_remainder", christoffel_decay_scan(cfg.geometry, cfg.params));
    });
    run.phase("curvature_scan", [&] { run.check_fit("background.curvature", sphere_curvature_scan(bg)); });
    return;
  }
  std::optional<ConeTorusModel> model;
  if (!run.phase("build", [&] { model.emplace(cfg.geometry, cfg.params); })) return;
  run.phase("edge_metric", [&] {
    auto g = cfg.cone_grid();
    auto m = model->edge_metric(g);
    std::vector<double> det(g.size());
    for (std::size_t k = 0; k < det.size(); ++k) det[k] = m.det(k);
    run.check("background.min_det", *std::min_element(det.begin(), det.end()));
    run.write("edge_metric_det.csv", cone_field_csv(g, det));
    auto F = model->ricci_potential(g, m);
    run.write("ricci_potential.csv", cone_field_csv(g, F.values, true));
  });
  run.phase("curvature_scan", [&] {
    auto s = curvature_derivative_scan(*model);
    run.check_fit("background.curvature", s.R);
    run.check_fit("background.curvature_derivative", s.DR);
    run.fit(s.Ric, "|Ric|_g");
    run.report("curvature_symmetry_error", s.symmetry_error);
  });
  run.phase("metric_envelopes", [&] {
    int failing = 0;
    for (const auto& e : metric_envelope_scan(*model)) {
      run.fit(e.fit, e.name);
      failing += !e.fit.pass;
    }
    run.check("background.metric_envelopes", failing);
  });
}

inline void record_steps(Run& run, const SolveState& s) {
  CsvTable steps({"t", "c", "tF_min", "tF_max", "residual", "a1", "a2", "volume_error", "newton_iters"});
  CsvTable newton({"step", "iteration", "residual"});
  double bracket = 0, volume = 0;
  for (std::size_t k = 0; k < s.steps.size(); ++k) {
    const auto& r = s.steps[k];
    steps.row({r.t, r.c, r.tF_min, r.tF_max, r.residual, r.a1, r.a2, r.volume_error, double(r.newton_iters)});
    bracket = std::max({bracket, r.tF_min - r.c, r.c - r.tF_max});
    volume = std::max(volume, r.volume_error);
  }
  for (std::size_t k = 0; k < s.histories.size(); ++k)
    for (std::size_t i = 0; i < s.histories[k].size(); ++i) newton.row({double(k), double(i), s.histories[k][i]});
  run.write("steps.csv", steps);
  run.write("newton.csv", newton);
  run.check("solve.c_bracket", bracket);
  run.report("continuity", {{"t", s.t}, {"c", s.c}, {"normalization", s.normalization}, {"steps", s.steps.size()},
                            {"max_volume_error", volume}});
}

inline void solve(Run& run) {
  const auto& cfg = run.config();
  auto opt = cfg.continuity_options();
  if (cfg.geometry.variant == Variant::p1_marked) {
    SphereBackground bg;
    if (!run.phase("background", [&] { bg = build_sphere_background(cfg.geometry, cfg.params); })) return;
    CoverProblem p(bg);
    SolveState s;
    if (!run.phase("continuity", [&] {
          s = continuity_solve(p, opt);
          run.write(state_file, state_to_text(cfg, s));
          run.write("potential.csv", cover_field_csv(bg, s.u));
          record_steps(run, s);
        }))
      return;
    run.phase("checks", [&] {
      double vol = 0;
      for (const auto& r : s.steps) vol = std::max(vol, r.volume_error);
      run.check("solve.volume", vol);
      run.check("solve.residual", sup_norm(ma_residual(p, s)));
      run.check("solve.exact_match", max_abs_diff(s.u, dim1_exact_solve(p, 1.0).u));
      auto k = flat_curvature_residual(p, bg, s);
      run.check("solve.curvature", k.sup);
      run.report("curvature", {{"sup", k.sup}, {"innermost", k.innermost}, {"excluded_annuli", k.excluded_annuli}});
    });
    return;
  }
  std::optional<ManufacturedCell> mc;
  if (!run.phase("background", [&] { mc.emplace(make_manufactured_cell(cfg.geometry, cfg.params, cfg.cone_grid())); }))
    return;
  SolveState s;
  if (!run.phase("continuity", [&] {
        s = continuity_solve(mc->problem, opt);
        run.write(state_file, state_to_text(cfg, s));
        run.write("potential.csv", cone_field_csv(mc->problem.grid(), s.u));
        record_steps(run, s);
      }))
    return;
  run.phase("checks", [&] {
    run.check("solve.residual", sup_norm(ma_residual(mc->problem, s)));
    run.check("solve.manufactured_error", max_abs_diff(s.u, mc->u_star));
    double floor = newton_floor(mc->problem, 0.5, opt);
    auto q = quadratic_contraction(s.histories, 1e-2, floor_margin * floor);
    run.report("quadratic_contraction", {{"K", q.K}, {"pairs", q.pairs}, {"pass", q.pass}, {"newton_floor", floor}});
    // Without qualifying pairs there is no evidence of contraction.
    run.check("solve.quadratic_contraction", q.pass ? q.K : std::numeric_limits<double>::infinity());
    run.report("manufactured", {{"a", mc->a}, {"b", mc->b}});
  });
}

inline json c0_json(const C0Report& r) {
  return {{"bound", r.bound},       {"green_term", r.green_term}, {"barrier_term", r.barrier_term},
          {"min_margin", r.min_margin}, {"oscillation", r.oscillation}, {"samples", r.nodes.size()},
          {"u_at", r.u_at}};
}

inline json laplacian_json(const LaplacianReport& r) {
  return {{"L", r.L},
          {"kappa", r.kappa},
          {"epsilon", r.epsilon},
          {"H", to_json(r.H)},
          {"H_without_barrier", to_json(r.H_without_barrier)},
          {"peak_moved", r.peak_moved},
          {"laplacian_max", r.laplacian_max},
          {"a1", r.a1},
          {"a2", r.a2}};
}

inline json sobolev_json(const SobolevReport& r) {
  return {{"trials", r.trials}, {"max_ratio", r.max_ratio}, {"argmax", r.argmax}, {"constant_ratio", r.constant_ratio}};
}

// Distance of a peak from the excluded rim in annuli; positive means off the rim.
inline double rim_margin(const Peak& p, const RimClassifier& rims) {
  return double(rims.innermost - rims.drop + 1 - p.annulus);
}

inline void verify_cover(Run& run) {
  const auto& cfg = run.config();
  SphereBackground bg;
  if (!run.phase("background", [&] { bg = build_sphere_background(cfg.geometry, cfg.params); })) return;
  CoverProblem p(bg);
  SolveState s;
  if (!run.phase("load_state", [&] {
        s = load_state(run.out(), cfg, p.size());
        if (s.t != 1) throw StateError("stored state did not reach t = 1");
      }))
    return;
  EstimateOptions eo;
  eo.seed = cfg.seed;
  CoverEstimates coarse;
  bool have_coarse = run.phase("estimates", [&] {
    coarse = cover_estimates(p, bg, s, eo);
    run.check("verify.c0", coarse.c0.min_margin);
    run.report("c0", c0_json(coarse.c0));
    run.check("verify.barrier", coarse.barrier.min_eigenvalue);
    run.report("barrier", {{"epsilon", coarse.barrier.epsilon}, {"min_eigenvalue", coarse.barrier.min_eigenvalue}});
    run.report("laplacian", laplacian_json(coarse.laplacian));
    run.report("laplacian_without_barrier", laplacian_json(coarse.laplacian_no_barrier));
    run.report("sobolev", sobolev_json(coarse.sobolev));
    run.check_fit("verify.covariant_b", coarse.third.covariant_b);
    run.check_fit("verify.S_holder", coarse.third.s_holder);
    run.report("third_order", {{"S_peak", to_json(coarse.third.S_peak)},
                               {"Q_peak", to_json(coarse.third.Q_peak)},
                               {"cone_value", coarse.third.cone_value},
                               {"trailing", coarse.third.trailing}});
    const auto& m = coarse.moser;
    run.check("verify.moser", m.identity_error);
    run.report("moser", {{"N", m.N}, {"min_gap", m.min_gap}, {"l1", m.l1}, {"energy", m.energy},
                         {"pairing", m.pairing}, {"energy_bound", m.energy_bound}, {"l4", m.l4}});
    run.check("verify.final_curvature", coarse.curvature.residual);
    run.fit(coarse.curvature.scan, "final.curvature");
    run.write("S.csv", cover_field_csv(bg, coarse.third.S));
    CsvTable so({"trial", "ratio"});
    for (std::size_t k = 0; k < coarse.sobolev.ratios.size(); ++k) so.row({double(k), coarse.sobolev.ratios[k]});
    run.write("sobolev.csv", so);
  });
  if (!have_coarse) return;
  // Refinement partner at twice the cover resolution, solved afresh.
  RunConfig fine_cfg = cfg;
  fine_cfg.geometry.cover_n = 2 * cfg.geometry.cover_n;
  run.phase("refinement", [&] {
    auto fbg = build_sphere_background(fine_cfg.geometry, fine_cfg.params);
    CoverProblem fp(fbg);
    auto fs = continuity_solve(fp, fine_cfg.continuity_options());
    auto fine = cover_estimates(fp, fbg, fs, eo);
    // Peak locations are judged on the finer grid of the pair.
    auto rims = cover_rims(fbg);
    run.check("verify.laplacian_peak", rim_margin(fine.laplacian.H, rims));
    run.check("verify.S_peak", rim_margin(fine.third.S_peak, rims));
    run.check("verify.Q_peak", rim_margin(fine.third.Q_peak, rims));
    run.report("fine", {{"cover_n", fine_cfg.geometry.cover_n},
                        {"laplacian", laplacian_json(fine.laplacian)},
                        {"S_peak", to_json(fine.third.S_peak)},
                        {"Q_peak", to_json(fine.third.Q_peak)},
                        {"sobolev", sobolev_json(fine.sobolev)},
                        {"c0", c0_json(fine.c0)}});
    CsvTable t({"quantity", "coarse", "fine", "change"});
    auto pair = [&](const std::string& check, const std::string& q, double a, double b) {
      auto r = refinement_check(q, a, b, cfg.threshold(check));
      run.check(check, r.change);
      t.row_strings({q, format_number(a), format_number(b), format_number(r.change)});
    };
    pair("verify.refine.c0_oscillation", "c0.oscillation", coarse.c0.oscillation, fine.c0.oscillation);
    pair("verify.refine.a1", "laplacian.a1", coarse.laplacian.a1, fine.laplacian.a1);
    pair("verify.refine.a2", "laplacian.a2", coarse.laplacian.a2, fine.laplacian.a2);
    pair("verify.refine.sobolev", "sobolev.max_ratio", coarse.sobolev.max_ratio, fine.sobolev.max_ratio);
    pair("verify.refine.S_max", "S.max", coarse.third.S_peak.value, fine.third.S_peak.value);
    pair("verify.refine.Q_max", "Q.max", coarse.third.Q_peak.value, fine.third.Q_peak.value);
    run.write("refinement.csv", t);
  });
}

inline void verify_cell(Run& run) {
  const auto& cfg = run.config();
  std::optional<ConeTorusModel> model;
  std::optional<ManufacturedCell> mc;
  if (!run.phase("background", [&] {
        model.emplace(cfg.geometry, cfg.params);
        mc.emplace(make_manufactured_cell(cfg.geometry, cfg.params, cfg.cone_grid()));
      }))
    return;
  const auto& p = mc->problem;
  SolveState s;
  if (!run.phase("load_state", [&] {
        s = load_state(run.out(), cfg, p.size());
        if (s.t != 1) throw StateError("stored state did not reach t = 1");
      }))
    return;
  const auto& prm = cfg.params;
  run.note("c0", "not_applicable", "no Green's function is available on the cone_torus cell");
  run.phase("barrier", [&] {
    auto b = barrier_check(*model, p.grid(), prm.eps());
    run.check("verify.barrier", b.min_eigenvalue);
    run.report("barrier", {{"epsilon", b.epsilon}, {"min_eigenvalue", b.min_eigenvalue}});
  });
  run.phase("laplacian", [&] {
    double L = laplacian_weight(*model);
    auto r = laplacian_bound_check(p, *model, s.u, L, prm.kappa, prm.eps());
    run.check("verify.laplacian_peak", rim_margin(r.H, cell_rims(p.grid())));
    run.report("laplacian", laplacian_json(r));
  });
  run.phase("sobolev", [&] {
    auto coarse = sobolev_ratio_check(p, 100, cfg.seed);
    auto fine_cell = make_manufactured_cell(cfg.geometry, prm, p.grid().refined());
    auto fine = sobolev_ratio_check(fine_cell.problem, 100, cfg.seed);
    run.report("sobolev", sobolev_json(coarse));
    run.report("sobolev_fine", sobolev_json(fine));
    run.check("verify.refine.sobolev", refinement_check("sobolev", coarse.max_ratio, fine.max_ratio, 1).change);
  });
  run.phase("lipschitz", [&] {
    auto r = lipschitz_second_derivative_check(p, s.u, prm);
    run.check_fit("verify.psi_decay", r.psi_decay);
    run.report("lipschitz", {{"phi", r.phi}, {"psi", r.psi}, {"chi", r.chi}});
  });
  run.phase("final_curvature", [&] {
    run.check("verify.final_curvature", final_curvature_check(p, s).residual);
  });
}

inline void verify(Run& run) {
  if (run.config().geometry.variant == Variant::p1_marked) verify_cover(run);
  else verify_cell(run);
}

inline void model_solve(Run& run) {
  const auto& cfg = run.config();
  auto g = cfg.cone_grid();
  run.phase("identity", [&] {
    auto one = sample(g, [](double, double, double, double) { return cplx(1.0); });
    auto res = solve_model_poisson(one);
    double err = 0, lap = 0;
    for (int i = 0; i < g.n_r; ++i)
      for (int s = 0; s < g.slice(); ++s) {
        double r = g.r(i);
        err = std::max(err, std::abs(res.v.values[std::size_t(i) * g.slice() + s] - (r * r - g.radius * g.radius)));
      }
    auto pot = sample(g, [](double r, double, double, double) { return cplx(r * r); });
    for (auto v : model_laplacian(pot).values) lap = std::max(lap, std::abs(v - 1.0));
    run.check("model.identity", err);
    run.check("model.cone_potential", lap);
    run.report("identity", {{"solver_residual", res.residual}});
    run.write("model_solution.csv", cone_field_csv(g, res.v.values, true));
  });
  run.phase("vanishing", [&] {
    CsvTable t({"corpus_id", "exponent", "limit", "limit_tolerance", "exact_zero"});
    for (const auto& c : holder_corpus(cfg.params.alpha)) {
      auto res = solve_model_poisson(corpus_field(g, c));
      auto fit = check_vanishing_at_cone(res.v, c.id);
      run.check_fit("model.vanishing", fit, c.id);
      t.row_strings({c.id, format_number(fit.exponent), format_number(fit.limit), format_number(fit.limit_tolerance),
                     fit.exact_zero ? "1" : "0"});
    }
    run.write("vanishing.csv", t);
  });
}

inline void schauder_scan(Run& run) {
  const auto& cfg = run.config();
  auto g = cfg.cone_grid();
  double a = cfg.params.alpha;
  run.phase("scan", [&] {
    CsvTable t({"beta", "alpha", "corpus_id", "coarse_ratio", "fine_ratio"});
    double coarse = 0, fine = 0;
    for (const auto& c : holder_corpus(a)) {
      double rc = schauder_ratio(corpus_field(g, c), a).ratio;
      double rf = schauder_ratio(corpus_field(g.refined(), c), a).ratio;
      coarse = std::max(coarse, rc);
      fine = std::max(fine, rf);
      t.row_strings({format_number(g.beta), format_number(a), c.id, format_number(rc), format_number(rf)});
    }
    run.write("schauder.csv", t);
    run.report("schauder", {{"coarse_max", coarse}, {"fine_max", fine}});
    run.check("schauder.refinement", refinement_check("schauder", coarse, fine, 1).change);
  });
}

inline constexpr int appendix_corpus_size = 6;

inline void appendix_check(Run& run) {
  const auto& cfg = run.config();
  const auto& prm = cfg.params;
  if (!run.phase("gate", [&] {
        if (!prm.appendix_hypothesis())
          throw HypothesisError("refused: the decay check needs alpha * beta < 1 - 2 * beta, got alpha * beta = " +
                                format_number(prm.alpha * prm.beta) + " and 1 - 2 * beta = " +
                                format_number(1 - 2 * prm.beta));
      }))
    return;
  run.phase("decay", [&] {
    auto g = cfg.cone_grid();
    auto corpus = holder_corpus(prm.alpha);
    CsvTable t({"corpus_id", "exponent", "threshold", "exact_zero"});
    for (int k = 0; k < appendix_corpus_size; ++k) {
      auto fit = appendix_decay_check(corpus_field(g, corpus[k]), prm);
      run.check_fit("appendix.decay", fit, corpus[k].id);
      t.row_strings({corpus[k].id, format_number(fit.exponent), format_number(cfg.threshold("appendix.decay")),
                     fit.exact_zero ? "1" : "0"});
    }
    run.write("appendix.csv", t);
  });
}

}  // namespace pipeline

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"background", "solve", "verify", "model-solve", "schauder-scan",
                                             "appendix-check"};
  return s;
}

// Runs one subcommand and returns its exit status.
inline int run_subcommand(const std::string& name, const RunConfig& cfg, const std::filesystem::path& out,
                          std::map<std::string, std::string> versions = {}) {
  Run run(name, cfg, out, std::move(versions));
  if (name == "background") pipeline::background(run);
  else if (name == "solve") pipeline::solve(run);
  else if (name == "verify") pipeline::verify(run);
  else if (name == "model-solve") pipeline::model_solve(run);
  else if (name == "schauder-scan") pipeline::schauder_scan(run);
  else if (name == "appendix-check") pipeline::appendix_check(run);
  else throw ValidationError("unknown subcommand '" + name + "'");
  return run.finish();
}

}  // namespace edgeflat
