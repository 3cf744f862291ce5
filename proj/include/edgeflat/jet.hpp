#pragma once
// Truncated multivariate Taylor polynomials with complex coefficients.
// Variables are independent slots, so a holomorphic coordinate and its
// conjugate occupy two slots (Wirtinger calculus). Coefficients are stored
// as Taylor coefficients; derivative() rescales by the multi-factorial.

#include <array>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace edgeflat {

namespace detail {

template <int V, int K>
struct JetTable {
  using Index = std::array<int, V>;
  std::vector<Index> exps;
  std::vector<int> degree;
  std::vector<int> lookup;  // base-(K+1) code -> position, -1 if degree > K
  struct Term { int a, b, c; };
  std::vector<Term> mult;
  std::vector<double> factorial;  // alpha! per slot

  static int code(const Index& e) {
    int c = 0;
    for (int v = 0; v < V; ++v) c = c * (K + 1) + e[v];
    return c;
  }

  JetTable() {
    int full = 1;
    for (int v = 0; v < V; ++v) full *= (K + 1);
    lookup.assign(full, -1);
    for (int d = 0; d <= K; ++d) {
      Index e{};
      enumerate(e, 0, d);
    }
    for (std::size_t i = 0; i < exps.size(); ++i)
      for (std::size_t j = 0; j < exps.size(); ++j) {
        if (degree[i] + degree[j] > K) continue;
        Index s;
        for (int v = 0; v < V; ++v) s[v] = exps[i][v] + exps[j][v];
        mult.push_back({int(i), int(j), lookup[code(s)]});
      }
    factorial.resize(exps.size());
    for (std::size_t i = 0; i < exps.size(); ++i) {
      double f = 1;
      for (int v = 0; v < V; ++v)
        for (int q = 2; q <= exps[i][v]; ++q) f *= q;
      factorial[i] = f;
    }
  }

  void enumerate(Index& e, int slot, int left) {
    if (slot == V - 1) {
      e[slot] = left;
      lookup[code(e)] = int(exps.size());
      exps.push_back(e);
      int d = 0;
      for (int v = 0; v < V; ++v) d += e[v];
      degree.push_back(d);
      return;
    }
    for (int q = left; q >= 0; --q) {
      e[slot] = q;
      enumerate(e, slot + 1, left - q);
    }
  }

  static const JetTable& get() {
    static const JetTable t;
    return t;
  }
};

}  // namespace detail

template <int V, int K>
class Jet {
 public:
  using C = std::complex<double>;
  using Index = std::array<int, V>;
  using Table = detail::JetTable<V, K>;

  Jet() : c_(table().exps.size(), C(0)) {}
  Jet(C value) : Jet() { c_[0] = value; }
  Jet(double value) : Jet(C(value)) {}

  static Jet variable(int slot, C at) {
    Jet j(at);
    if (K >= 1) {
      Index e{};
      e[slot] = 1;
      j.c_[pos(e)] = 1.0;
    }
    return j;
  }

  static Jet from_coefficients(std::vector<C> c) {
    if (c.size() != table().exps.size()) throw std::invalid_argument("jet size");
    Jet j;
    j.c_ = std::move(c);
    return j;
  }

  static const Table& table() { return Table::get(); }
  static int pos(const Index& e) {
    int d = 0;
    for (int v = 0; v < V; ++v) d += e[v];
    if (d > K) throw std::out_of_range("jet order exceeded");
    return table().lookup[Table::code(e)];
  }

  C value() const { return c_[0]; }
  C coeff(const Index& e) const { return c_[pos(e)]; }
  C derivative(const Index& e) const {
    int p = pos(e);
    return c_[p] * table().factorial[p];
  }
  const std::vector<C>& coefficients() const { return c_; }

  // Partial derivative as a jet; the top-degree part is dropped.
  Jet d(int slot) const {
    Jet out;
    const auto& t = table();
    for (std::size_t i = 0; i < t.exps.size(); ++i) {
      if (t.degree[i] >= K) continue;
      Index e = t.exps[i];
      e[slot] += 1;
      out.c_[i] = double(e[slot]) * c_[t.lookup[Table::code(e)]];
    }
    return out;
  }

  Jet& operator+=(const Jet& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(C s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) { return a *= -1.0; }
  friend Jet operator*(Jet a, C s) { return a *= s; }
  friend Jet operator*(C s, Jet a) { return a *= s; }
  friend Jet operator*(Jet a, double s) { return a *= C(s); }
  friend Jet operator*(double s, Jet a) { return a *= C(s); }
  friend Jet operator+(Jet a, C s) { a.c_[0] += s; return a; }
  friend Jet operator+(C s, Jet a) { a.c_[0] += s; return a; }
  friend Jet operator-(Jet a, C s) { a.c_[0] -= s; return a; }
  friend Jet operator-(C s, Jet a) { return (-a) + s; }
  friend Jet operator+(Jet a, double s) { a.c_[0] += s; return a; }
  friend Jet operator+(double s, Jet a) { a.c_[0] += s; return a; }
  friend Jet operator-(Jet a, double s) { a.c_[0] -= s; return a; }
  friend Jet operator-(double s, Jet a) { return (-a) + s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet out;
    for (const auto& t : table().mult) out.c_[t.c] += a.c_[t.a] * b.c_[t.b];
    return out;
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * b.reciprocal(); }
  friend Jet operator/(const Jet& a, C s) { return a * (1.0 / s); }
  friend Jet operator/(const Jet& a, double s) { return a * (1.0 / s); }
  friend Jet operator/(C s, const Jet& b) { return b.reciprocal() * s; }
  friend Jet operator/(double s, const Jet& b) { return b.reciprocal() * s; }

  // f(x0 + d) = sum_k f^(k)(x0)/k! d^k with d the nilpotent part.
  Jet compose(const std::array<C, K + 1>& taylor) const {
    Jet delta = *this;
    delta.c_[0] = 0;
    Jet out(taylor[0]);
    Jet power(1.0);
    for (int k = 1; k <= K; ++k) {
      power = power * delta;
      out += power * taylor[k];
    }
    return out;
  }

  Jet reciprocal() const {
    std::array<C, K + 1> t;
    C x = c_[0];
    if (x == C(0)) throw std::domain_error("jet reciprocal of zero");
    C p = 1.0 / x;
    for (int k = 0; k <= K; ++k) {
      t[k] = p;
      p *= -1.0 / x;
    }
    return compose(t);
  }

 private:
  std::vector<C> c_;
};

template <int V, int K>
Jet<V, K> exp(const Jet<V, K>& a) {
  std::array<std::complex<double>, K + 1> t;
  auto e = std::exp(a.value());
  double f = 1;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) f *= k;
    t[k] = e / f;
  }
  return a.compose(t);
}

template <int V, int K>
Jet<V, K> log(const Jet<V, K>& a) {
  std::array<std::complex<double>, K + 1> t;
  auto x = a.value();
  t[0] = std::log(x);
  for (int k = 1; k <= K; ++k)
    t[k] = ((k % 2) ? 1.0 : -1.0) / (double(k) * std::pow(x, k));
  return a.compose(t);
}

// Principal branch x^p for complex base.
template <int V, int K>
Jet<V, K> pow(const Jet<V, K>& a, double p) {
  std::array<std::complex<double>, K + 1> t;
  auto x = a.value();
  std::complex<double> coef = 1.0;
  double f = 1;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) {
      coef *= (p - (k - 1));
      f *= k;
    }
    t[k] = coef * std::pow(x, p - k) / f;
  }
  return a.compose(t);
}

template <int V, int K>
Jet<V, K> sin(const Jet<V, K>& a) {
  std::array<std::complex<double>, K + 1> t;
  auto s = std::sin(a.value()), c = std::cos(a.value());
  std::complex<double> cyc[4] = {s, c, -s, -c};
  double f = 1;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) f *= k;
    t[k] = cyc[k % 4] / f;
  }
  return a.compose(t);
}

template <int V, int K>
Jet<V, K> cos(const Jet<V, K>& a) {
  std::array<std::complex<double>, K + 1> t;
  auto s = std::sin(a.value()), c = std::cos(a.value());
  std::complex<double> cyc[4] = {c, -s, -c, s};
  double f = 1;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) f *= k;
    t[k] = cyc[k % 4] / f;
  }
  return a.compose(t);
}

// Conjugate of a jet in (z, zbar) slot pairs: coefficient of
// z^a zbar^b maps to conj of the coefficient of z^b zbar^a.
// Slots are paired as (0,1), (2,3), ...
template <int V, int K>
Jet<V, K> conj_pairs(const Jet<V, K>& a) {
  static_assert(V % 2 == 0);
  const auto& t = Jet<V, K>::table();
  std::vector<std::complex<double>> c(t.exps.size());
  for (std::size_t i = 0; i < t.exps.size(); ++i) {
    auto e = t.exps[i];
    for (int v = 0; v < V; v += 2) std::swap(e[v], e[v + 1]);
    c[t.lookup[Jet<V, K>::Table::code(e)]] = std::conj(a.coefficients()[i]);
  }
  return Jet<V, K>::from_coefficients(std::move(c));
}

}  // namespace edgeflat
