#pragma once

// Splitting measures sigma on (0, 1/2]: the uniform law, the power-law
// family with CDF (2x)^a, finite atomic mixtures, and tabulated laws given
// by a monotone piecewise-linear inverse CDF.
//
// Besides sampling and CDF evaluation this module computes the two
// integrals that classify the chain:
//   I1 = int 1/x dsigma(x)          (finite  <=>  positive recurrence)
//   I2 = int_0^{1/2} dx / sigma((0,x])   (finite  =>  transience)
// Closed forms are used where available; otherwise quadrature over dyadic
// panels (2^-k-1, 2^-k] with a ratio test for summability, since both
// integrals can only diverge at 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cfpd/quadrature.hpp"
#include "cfpd/rng.hpp"

#include <json.hpp>

namespace cfpd {

// Extended real with an explicit "could not determine" state, used for
// quadrature that fails to certify either convergence or divergence.
class ExtReal {
 public:
  enum class Kind { finite, infinite, indeterminate };

  static ExtReal finite(double v) { return ExtReal(Kind::finite, v); }
  static ExtReal infinite() { return ExtReal(Kind::infinite, 0.0); }
  static ExtReal indeterminate() { return ExtReal(Kind::indeterminate, 0.0); }

  Kind kind() const { return kind_; }
  bool is_finite() const { return kind_ == Kind::finite; }
  bool is_infinite() const { return kind_ == Kind::infinite; }
  bool is_indeterminate() const { return kind_ == Kind::indeterminate; }
  double value() const {
    if (!is_finite()) throw std::logic_error("ExtReal: no finite value");
    return value_;
  }

  nlohmann::ordered_json to_json() const {
    if (is_finite()) return value_;
    return is_infinite() ? "inf" : "unknown";
  }

 private:
  ExtReal(Kind k, double v) : kind_(k), value_(v) {}
  Kind kind_;
  double value_;
};

class SigmaSpec {
 public:
  enum class Type { uniform, power_law, atomic, tabulated };

  struct Atom {
    double location;
    double weight;
  };

  static SigmaSpec uniform() { return SigmaSpec(Uniform{}); }

  // Density a 2^a x^(a-1) on (0,1/2]; CDF (2x)^a.
  static SigmaSpec power_law(double a) {
    if (!(a > 0.0)) throw std::invalid_argument("power_law: a must be > 0");
    return SigmaSpec(PowerLaw{a});
  }

  static SigmaSpec atomic(std::vector<Atom> atoms) {
    if (atoms.empty()) throw std::invalid_argument("atomic: no atoms");
    double total = 0.0;
    for (const auto& [x, w] : atoms) {
      if (!(x > 0.0) || x > 0.5)
        throw std::invalid_argument("atomic: location outside (0, 1/2]");
      if (!(w > 0.0)) throw std::invalid_argument("atomic: weight must be > 0");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw std::invalid_argument("atomic: weights must sum to 1");
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& a, const Atom& b) { return a.location < b.location; });
    Atomic a{std::move(atoms), {}, {}};
    build_alias(a);
    return SigmaSpec(std::move(a));
  }

  // Inverse CDF Q as a piecewise-linear table: Q(v[i]) = x[i], with
  // v spanning [0,1] and x nondecreasing in (0, 1/2].
  static SigmaSpec tabulated(std::vector<double> v, std::vector<double> x) {
    if (v.size() != x.size() || v.size() < 2)
      throw std::invalid_argument("tabulated: need matching tables, size >= 2");
    if (v.front() != 0.0 || v.back() != 1.0)
      throw std::invalid_argument("tabulated: v must span [0,1]");
    for (std::size_t i = 0; i + 1 < v.size(); ++i)
      if (!(v[i + 1] >= v[i]))
        throw std::invalid_argument("tabulated: v must be nondecreasing");
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
      if (!(x[i + 1] >= x[i]))
        throw std::invalid_argument("tabulated: x must be nondecreasing");
    if (!(x.front() > 0.0) || x.back() > 0.5)
      throw std::invalid_argument("tabulated: support outside (0, 1/2]");
    return SigmaSpec(Tabulated{std::move(v), std::move(x)});
  }

  Type type() const { return static_cast<Type>(storage_.index()); }
  bool is_atomic() const { return type() == Type::atomic; }

  double power() const { return std::get<PowerLaw>(storage_).a; }
  const std::vector<Atom>& atoms() const {
    return std::get<Atomic>(storage_).atoms;
  }

  // One draw distributed according to sigma; always lands in (0, 1/2].
  double sample(Rng& rng) const {
    switch (type()) {
      case Type::uniform:
        return 0.5 * (1.0 - rng.uniform01());
      case Type::power_law:
        return 0.5 * std::pow(1.0 - rng.uniform01(),
                              1.0 / std::get<PowerLaw>(storage_).a);
      case Type::atomic: {
        const auto& a = std::get<Atomic>(storage_);
        const double u = rng.uniform01() * static_cast<double>(a.atoms.size());
        auto idx = static_cast<std::size_t>(u);
        if (idx >= a.atoms.size()) idx = a.atoms.size() - 1;
        const double frac = u - static_cast<double>(idx);
        return a.atoms[frac < a.alias_threshold[idx] ? idx : a.alias_target[idx]]
            .location;
      }
      case Type::tabulated:
        return std::get<Tabulated>(storage_).quantile(rng.uniform01());
    }
    throw std::logic_error("sigma: bad variant");
  }

  // sigma((0, x]]
  double cdf(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 0.5) return 1.0;
    switch (type()) {
      case Type::uniform:
        return 2.0 * x;
      case Type::power_law:
        return std::pow(2.0 * x, std::get<PowerLaw>(storage_).a);
      case Type::atomic: {
        double sum = 0.0;
        for (const auto& [loc, w] : atoms())
          if (loc <= x) sum += w;
        return sum;
      }
      case Type::tabulated:
        return std::get<Tabulated>(storage_).cdf(x, /*strict=*/false);
    }
    throw std::logic_error("sigma: bad variant");
  }

  // sigma((0, x))
  double cdf_left(double x) const {
    switch (type()) {
      case Type::uniform:
      case Type::power_law:
        return cdf(x);  // continuous
      case Type::atomic: {
        if (x <= 0.0) return 0.0;
        double sum = 0.0;
        for (const auto& [loc, w] : atoms())
          if (loc < x) sum += w;
        return sum;
      }
      case Type::tabulated:
        if (x <= 0.0) return 0.0;
        return std::get<Tabulated>(storage_).cdf(x, /*strict=*/true);
    }
    throw std::logic_error("sigma: bad variant");
  }

  // sigma((a, 1/2]]
  double mass_above(double a) const { return 1.0 - cdf(a); }
  // sigma([b, 1/2]]; zero once b exceeds 1/2.
  double mass_from(double b) const {
    if (b > 0.5) return 0.0;
    return 1.0 - cdf_left(b);
  }

  // int g(u) dsigma(u). Exact sum for atoms; for the continuous families a
  // change of variables maps the integral onto a smooth Gauss-Legendre one.
  template <class G>
  double expect_split(G&& g, int nodes = 64) const {
    switch (type()) {
      case Type::uniform:
        return gl_integrate([&](double u) { return 2.0 * g(u); }, 0.0, 0.5,
                            nodes);
      case Type::power_law: {
        const double a = std::get<PowerLaw>(storage_).a;
        // v = (2u)^a is uniform on (0,1)
        return gl_integrate(
            [&](double v) { return g(0.5 * std::pow(v, 1.0 / a)); }, 0.0, 1.0,
            nodes);
      }
      case Type::atomic: {
        double sum = 0.0;
        for (const auto& [loc, w] : atoms()) sum += w * g(loc);
        return sum;
      }
      case Type::tabulated: {
        const auto& t = std::get<Tabulated>(storage_);
        return gl_integrate([&](double v) { return g(t.quantile(v)); }, 0.0,
                            1.0, nodes);
      }
    }
    throw std::logic_error("sigma: bad variant");
  }

  // int (t^k + (1-t)^k) dsigma(t), closed form for uniform and power law.
  double moment_symmetric(int k, int nodes = 64) const {
    if (k < 0) throw std::invalid_argument("moment_symmetric: k < 0");
    switch (type()) {
      case Type::uniform:
        return 2.0 / (k + 1.0);
      case Type::power_law: {
        const double a = std::get<PowerLaw>(storage_).a;
        // int t^k dsigma = a / ((k+a) 2^k); the (1-t)^k part by binomial
        // expansion, each power integrating in closed form.
        double first = a / ((k + a) * std::ldexp(1.0, k));
        double second = 0.0;
        double binom = 1.0;
        for (int m = 0; m <= k; ++m) {
          const double term = binom * a / ((a + m) * std::ldexp(1.0, m));
          second += (m % 2 == 0) ? term : -term;
          binom = binom * (k - m) / (m + 1.0);
        }
        return first + second;
      }
      default:
        return expect_split(
            [k](double t) { return std::pow(t, k) + std::pow(1.0 - t, k); },
            nodes);
    }
  }

  ExtReal integral_one_over_x() const;
  ExtReal integral_inverse_cdf() const;

  // Quadrature route for the two integrals, also usable for cross-checks
  // against the closed forms.
  ExtReal integral_one_over_x_quadrature() const;
  ExtReal integral_inverse_cdf_quadrature() const;

  std::string tag() const {
    switch (type()) {
      case Type::uniform:
        return "uniform";
      case Type::power_law: {
        std::string s = "pl" + format_double(std::get<PowerLaw>(storage_).a);
        return s;
      }
      case Type::atomic:
        return "atomic" + std::to_string(atoms().size());
      case Type::tabulated:
        return "tab" + std::to_string(std::get<Tabulated>(storage_).x.size());
    }
    return "sigma";
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    switch (type()) {
      case Type::uniform:
        j["type"] = "uniform";
        break;
      case Type::power_law:
        j["type"] = "power_law";
        j["a"] = std::get<PowerLaw>(storage_).a;
        break;
      case Type::atomic: {
        j["type"] = "atomic";
        auto arr = nlohmann::ordered_json::array();
        for (const auto& [loc, w] : atoms())
          arr.push_back(nlohmann::ordered_json::array({loc, w}));
        j["atoms"] = arr;
        break;
      }
      case Type::tabulated: {
        const auto& t = std::get<Tabulated>(storage_);
        j["type"] = "tabulated";
        j["v"] = t.v;
        j["x"] = t.x;
        break;
      }
    }
    return j;
  }

  static SigmaSpec from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "uniform") return uniform();
    if (type == "power_law") return power_law(j.at("a").get<double>());
    if (type == "atomic") {
      std::vector<Atom> atoms;
      for (const auto& e : j.at("atoms"))
        atoms.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
      return atomic(std::move(atoms));
    }
    if (type == "tabulated")
      return tabulated(j.at("v").get<std::vector<double>>(),
                       j.at("x").get<std::vector<double>>());
    throw std::invalid_argument("sigma: unknown type \"" + type + "\"");
  }

  static std::string format_double(double v) {
    std::string s = nlohmann::json(v).dump();
    return s;
  }

 private:
  struct Uniform {};
  struct PowerLaw {
    double a;
  };
  struct Atomic {
    std::vector<Atom> atoms;
    // Walker alias table; one uniform draw yields one atom.
    std::vector<double> alias_threshold;
    std::vector<std::size_t> alias_target;
  };
  struct Tabulated {
    std::vector<double> v;  // CDF values, [0,1]
    std::vector<double> x;  // quantiles, (0,1/2]

    double quantile(double p) const {
      if (p <= 0.0) return x.front();
      if (p >= 1.0) return x.back();
      const auto it = std::upper_bound(v.begin(), v.end(), p);
      const std::size_t hi = static_cast<std::size_t>(it - v.begin());
      const std::size_t lo = hi - 1;
      const double dv = v[hi] - v[lo];
      if (dv <= 0.0) return x[hi];
      const double t = (p - v[lo]) / dv;
      return x[lo] + t * (x[hi] - x[lo]);
    }

    // strict=false: sigma((0,q]); strict=true: sigma((0,q)).
    double cdf(double q, bool strict) const {
      if (strict ? (q <= x.front()) : (q < x.front())) return 0.0;
      if (strict ? (q > x.back()) : (q >= x.back())) return 1.0;
      // Largest v with Q(v) <= q (or < q when strict); table segments with
      // equal x values are atoms and must be swallowed whole.
      double best = 0.0;
      for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        const bool below_hi = strict ? (x[i + 1] < q) : (x[i + 1] <= q);
        if (below_hi) {
          best = v[i + 1];
          continue;
        }
        const bool below_lo = strict ? (x[i] < q) : (x[i] <= q);
        if (below_lo && x[i + 1] > x[i]) {
          const double t = (q - x[i]) / (x[i + 1] - x[i]);
          best = std::max(best, v[i] + t * (v[i + 1] - v[i]));
        }
        break;
      }
      return std::min(1.0, best);
    }
  };

  using Storage = std::variant<Uniform, PowerLaw, Atomic, Tabulated>;

  explicit SigmaSpec(Storage s) : storage_(std::move(s)) {}

  static void build_alias(Atomic& a) {
    const std::size_t n = a.atoms.size();
    a.alias_threshold.assign(n, 1.0);
    a.alias_target.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = a.atoms[i].weight * static_cast<double>(n);
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back(), l = large.back();
      small.pop_back();
      large.pop_back();
      a.alias_threshold[s] = scaled[s];
      a.alias_target[s] = l;
      scaled[l] -= 1.0 - scaled[s];
      (scaled[l] < 1.0 ? small : large).push_back(l);
    }
    for (std::size_t i : small) a.alias_threshold[i] = 1.0;
    for (std::size_t i : large) a.alias_threshold[i] = 1.0;
  }

  // Sums dyadic-panel contributions; the integrand may only blow up at 0.
  // Returns infinite() when the panel ratio test certifies divergence and
  // indeterminate() when neither convergence nor divergence is certified.
  template <class PanelIntegral>
  static ExtReal sum_dyadic_panels(PanelIntegral&& panel) {
    double total = 0.0;
    double prev = -1.0;
    int flat_run = 0;
    for (int k = 1; k <= 1024; ++k) {
      const double hi = std::ldexp(1.0, -k);      // 2^-k
      const double lo = std::ldexp(1.0, -k - 1);  // 2^-k-1
      const double s = panel(lo, hi);
      if (!std::isfinite(s)) return ExtReal::infinite();
      total += s;
      if (s <= 0.0) return ExtReal::finite(total);
      if (prev > 0.0) {
        const double ratio = s / prev;
        // A long run of non-decaying panels means the integrand behaves
        // like 1/x (or worse) down to scale 2^-600: divergent for any
        // representable support.
        flat_run = (ratio >= 0.997) ? flat_run + 1 : 0;
        if (flat_run >= 600) return ExtReal::infinite();
        if (ratio < 0.97 && s < 1e-14 * std::max(total, 1.0)) {
          // geometric tail bound
          total += s * ratio / (1.0 - ratio);
          return ExtReal::finite(total);
        }
      }
      prev = s;
    }
    return ExtReal::indeterminate();
  }

  Storage storage_;
};

inline ExtReal SigmaSpec::integral_one_over_x() const {
  switch (type()) {
    case Type::uniform:
      return ExtReal::infinite();
    case Type::power_law: {
      const double a = power();
      if (a <= 1.0) return ExtReal::infinite();
      return ExtReal::finite(2.0 * a / (a - 1.0));
    }
    case Type::atomic: {
      double sum = 0.0;
      for (const auto& [loc, w] : atoms()) sum += w / loc;
      return ExtReal::finite(sum);
    }
    case Type::tabulated:
      return integral_one_over_x_quadrature();
  }
  throw std::logic_error("sigma: bad variant");
}

inline ExtReal SigmaSpec::integral_inverse_cdf() const {
  switch (type()) {
    case Type::uniform:
      return ExtReal::infinite();
    case Type::power_law: {
      const double a = power();
      if (a >= 1.0) return ExtReal::infinite();
      return ExtReal::finite(1.0 / (2.0 * (1.0 - a)));
    }
    case Type::atomic:
      // The CDF vanishes below the smallest atom, so the integrand is
      // infinite on an interval of positive length.
      return ExtReal::infinite();
    case Type::tabulated:
      return integral_inverse_cdf_quadrature();
  }
  throw std::logic_error("sigma: bad variant");
}

inline ExtReal SigmaSpec::integral_one_over_x_quadrature() const {
  switch (type()) {
    case Type::uniform:
      return sum_dyadic_panels([](double lo, double hi) {
        return gl_integrate([](double x) { return 2.0 / x; }, lo, hi, 16);
      });
    case Type::power_law: {
      const double a = power();
      return sum_dyadic_panels([a](double lo, double hi) {
        return gl_integrate(
            [a](double x) {
              return a * std::pow(2.0, a) * std::pow(x, a - 2.0);
            },
            lo, hi, 16);
      });
    }
    case Type::atomic: {
      return integral_one_over_x();
    }
    case Type::tabulated: {
      // In quantile space: int 1/x dsigma = int_0^1 dv / Q(v); the only
      // possible blow-up is at v -> 0, so panel dyadically in v.
      const auto& t = std::get<Tabulated>(storage_);
      ExtReal head = sum_dyadic_panels([&t](double lo, double hi) {
        return gl_integrate([&t](double v) { return 1.0 / t.quantile(v); }, lo,
                            hi, 16);
      });
      if (!head.is_finite()) return head;
      const double tail = gl_integrate(
          [&t](double v) { return 1.0 / t.quantile(v); }, 0.5, 1.0, 64);
      return ExtReal::finite(head.value() + tail);
    }
  }
  throw std::logic_error("sigma: bad variant");
}

inline ExtReal SigmaSpec::integral_inverse_cdf_quadrature() const {
  // int_0^{1/2} dx / sigma((0,x]]; the CDF is available for every variant.
  if (is_atomic()) {
    const double smallest = atoms().front().location;
    if (smallest > 0.0) return ExtReal::infinite();
  }
  return sum_dyadic_panels([this](double lo, double hi) {
    return gl_integrate(
        [this](double x) {
          const double c = cdf(x);
          return c > 0.0 ? 1.0 / c
                         : std::numeric_limits<double>::infinity();
        },
        lo, hi, 16);
  });
}

// Support and recurrence classification of the chain driven by sigma.
struct ChainClassification {
  enum class Support { finite, infinite };
  enum class Recurrence { positive_recurrent, transient, unknown };

  Support support;
  Recurrence recurrence;
  ExtReal integral_one_over_x;
  ExtReal integral_inverse_cdf;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["support"] = support == Support::finite ? "finite" : "infinite";
    switch (recurrence) {
      case Recurrence::positive_recurrent:
        j["recurrence"] = "positive_recurrent";
        break;
      case Recurrence::transient:
        j["recurrence"] = "transient";
        break;
      case Recurrence::unknown:
        j["recurrence"] = "unknown";
        break;
    }
    j["I1"] = integral_one_over_x.to_json();
    j["I2"] = integral_inverse_cdf.to_json();
    return j;
  }
};

// Pure function of the two integrals. A finite I1 forces finite support and
// positive recurrence; failing that, a finite I2 forces transience; with
// both infinite the recurrence type is left open (no trichotomy is proved).
inline ChainClassification classify(const SigmaSpec& sigma) {
  ChainClassification c{ChainClassification::Support::infinite,
                        ChainClassification::Recurrence::unknown,
                        sigma.integral_one_over_x(),
                        sigma.integral_inverse_cdf()};
  if (c.integral_one_over_x.is_finite()) {
    c.support = ChainClassification::Support::finite;
    c.recurrence = ChainClassification::Recurrence::positive_recurrent;
  } else if (c.integral_inverse_cdf.is_finite()) {
    c.recurrence = ChainClassification::Recurrence::transient;
  }
  return c;
}

}  // namespace cfpd
