#pragma once

// Accumulators and statistical tests used by the experiment harness:
// compensated summation, Welford moments with deterministic merging,
// Kolmogorov-Smirnov one/two-sample tests, chi-square tail probability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace cfpd {

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

// Mean / variance accumulator. merge() is deterministic for a fixed merge
// order, which the harness guarantees by reducing replicas in index order.
class RunningStat {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const RunningStat& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * nb / (na + nb);
    m2_ += o.m2_ + d * d * na * nb / (na + nb);
    n_ += o.n_;
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  double sd() const { return std::sqrt(variance()); }
  double se() const {
    return n_ > 1 ? sd() / std::sqrt(static_cast<double>(n_)) : 0.0;
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Survival function of the Kolmogorov distribution, Q(lambda) = P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 1e-3) return 1.0;
  if (lambda > 8.0) return 0.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::min(1.0, std::max(0.0, 2.0 * sum));
}

struct KsResult {
  double statistic;
  double p_value;
};

// One-sample KS test against a continuous CDF.
inline KsResult ks_test_one_sample(std::vector<double> samples,
                                   const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, f - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - f);
  }
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  return {d, kolmogorov_survival(lambda)};
}

// Two-sample KS test.
inline KsResult ks_test_two_sample(std::vector<double> a,
                                   std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double d = 0.0, diff = 0.0;
  while (ia < a.size() && ib < b.size()) {
    const double xa = a[ia], xb = b[ib];
    if (xa <= xb) {
      diff += 1.0 / na;
      ++ia;
    }
    if (xb <= xa) {
      diff -= 1.0 / nb;
      ++ib;
    }
    d = std::max(d, std::abs(diff));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  return {d, kolmogorov_survival(lambda)};
}

namespace detail {

// Regularized upper incomplete gamma Q(a,x), series + continued fraction.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad args");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
inline double chi_square_p_value(double statistic, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_square: dof < 1");
  return detail::gamma_q(0.5 * dof, 0.5 * statistic);
}

}  // namespace cfpd
