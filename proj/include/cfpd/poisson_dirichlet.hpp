#pragma once

// Poisson-Dirichlet measures PD(theta), sampled two independent ways:
//
//  * residual allocation (stick breaking) with Beta(1,theta) fractions,
//    truncated once the remaining mass drops below a bound;
//  * a Poisson process on (eps, infinity) with intensity
//    theta x^-1 e^-x dx, normalized by its total mass.
//
// Also the closed-form correlation densities m_k(x) = theta^k (1-|x|)^(theta-1)
// of the size-biased k-tuple law, the marginalization identity
// int_0^1 m_k(x1, x) dx1 = (1 - |x|) m_{k-1}(x), and the one-step balance
// relation the m_k satisfy under the kernel with uniform splitting measure.
// Both identities are exposed as signed residuals evaluated by quadrature.
//
// Quadrature against the (1-|x|)^(theta-1) endpoint singularity uses the
// substitution w = (U - x1)^theta, which renders the integrand smooth for
// every theta > 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cfpd/partition.hpp"
#include "cfpd/quadrature.hpp"
#include "cfpd/rng.hpp"

#include <json.hpp>

namespace cfpd {

struct PDParams {
  double theta = 1.0;
  double truncation = 1e-8;   // stick-breaking tail-mass bound
  double poisson_eps = 1e-6;  // lower cutoff of the truncated intensity

  PDParams() = default;
  PDParams(double th, double trunc = 1e-8, double eps = 1e-6)
      : theta(th), truncation(trunc), poisson_eps(eps) {
    if (!(theta > 0.0)) throw std::invalid_argument("PDParams: theta <= 0");
    if (!(truncation > 0.0) || truncation >= 1.0)
      throw std::invalid_argument("PDParams: truncation outside (0,1)");
    if (!(poisson_eps > 0.0) || poisson_eps >= 1.0)
      throw std::invalid_argument("PDParams: eps outside (0,1)");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["theta"] = theta;
    j["truncation"] = truncation;
    j["eps"] = poisson_eps;
    return j;
  }
};

// Unsorted residual-allocation sticks: Y_1 = B_1, Y_{n+1} = B_{n+1} (1 - sum Y),
// B ~ Beta(1, theta). For theta = 1 the B are Uniform(0,1).
inline std::vector<double> sample_pd_sticks_raw(const PDParams& params,
                                                Rng& rng) {
  std::vector<double> sticks;
  double remaining = 1.0;
  while (remaining >= params.truncation) {
    const double fraction = rng.beta_one(params.theta);
    const double piece = fraction * remaining;
    if (piece > 0.0) sticks.push_back(piece);
    remaining *= (1.0 - fraction);
    if (sticks.size() > 4'000'000)
      throw std::runtime_error("stick sampler failed to converge");
  }
  return sticks;
}

inline Partition sample_pd_stick(const PDParams& params, Rng& rng) {
  return Partition(sample_pd_sticks_raw(params, rng));
}

// Immutable tables for the truncated intensity nu_theta^eps: total mass
// V = theta int_eps^inf x^-1 e^-x dx and the conditional inverse CDF on a
// log-spaced grid, built once per parameter set by panelwise quadrature.
class PoissonPdSampler {
 public:
  explicit PoissonPdSampler(const PDParams& params, std::size_t knots = 4096)
      : params_(params) {
    const double x_min = params.poisson_eps;
    const double x_max = 60.0;  // mass beyond is ~ e^-60, far below tolerance
    grid_.resize(knots);
    cumulative_.resize(knots);
    const double log_min = std::log(x_min), log_max = std::log(x_max);
    for (std::size_t i = 0; i < knots; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(knots - 1);
      grid_[i] = std::exp(log_min + t * (log_max - log_min));
    }
    grid_.front() = x_min;
    grid_.back() = x_max;
    double cum = 0.0;
    cumulative_[0] = 0.0;
    for (std::size_t i = 1; i < knots; ++i) {
      cum += gl_integrate([](double x) { return std::exp(-x) / x; },
                          grid_[i - 1], grid_[i], 16);
      cumulative_[i] = cum;
    }
    total_unit_mass_ = cum;
  }

  const PDParams& params() const { return params_; }

  // V_theta^eps
  double total_mass() const { return params_.theta * total_unit_mass_; }

  // One point of the Poisson process conditioned to (eps, inf).
  double sample_point(Rng& rng) const {
    const double target = rng.uniform01() * total_unit_mass_;
    const auto it =
        std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    std::size_t hi = static_cast<std::size_t>(it - cumulative_.begin());
    if (hi == 0) hi = 1;
    if (hi >= cumulative_.size()) hi = cumulative_.size() - 1;
    const std::size_t lo = hi - 1;
    const double dm = cumulative_[hi] - cumulative_[lo];
    const double t = dm > 0.0 ? (target - cumulative_[lo]) / dm : 0.0;
    return grid_[lo] + t * (grid_[hi] - grid_[lo]);
  }

  // Draw N ~ Poisson(V), N conditioned to be >= 1 (the normalization is
  // undefined on the empty configuration; the bias is of order e^-V),
  // then N i.i.d. points, sorted and normalized by their sum.
  Partition sample(Rng& rng) const {
    std::vector<double> points;
    for (int attempt = 0; attempt < 4096; ++attempt) {
      const std::uint64_t n = rng.poisson(total_mass());
      if (n == 0) continue;
      points.resize(n);
      for (auto& x : points) x = sample_point(rng);
      double sum = 0.0;
      for (double x : points) sum += x;
      for (auto& x : points) x /= sum;
      return Partition(std::move(points));
    }
    throw std::runtime_error("poisson sampler: empty configurations only");
  }

 private:
  PDParams params_;
  std::vector<double> grid_;
  std::vector<double> cumulative_;  // unit-theta mass over (eps, grid[i]]
  double total_unit_mass_ = 0.0;
};

inline Partition sample_pd_poisson(const PoissonPdSampler& sampler, Rng& rng) {
  return sampler.sample(rng);
}

// Correlation density of the size-biased k-tuple law under PD(theta):
// m_k(x) = theta^k (1 - |x|)^(theta-1) on {x_i >= 0, sum x_i < 1}.
inline double density_mk(double theta, const std::vector<double>& x) {
  if (!(theta > 0.0)) throw std::invalid_argument("density_mk: theta <= 0");
  double sum = 0.0;
  for (double xi : x) {
    if (xi < 0.0) throw std::domain_error("density_mk: negative coordinate");
    sum += xi;
  }
  if (sum >= 1.0) throw std::domain_error("density_mk: |x| >= 1");
  return std::pow(theta, static_cast<double>(x.size())) *
         std::pow(1.0 - sum, theta - 1.0);
}

// Size-bias k parts with replacement; the tuple is returned only when all
// k indices are pairwise distinct, otherwise the rejection marker.
inline std::optional<std::vector<double>> sample_size_biased_k(
    const Partition& p, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_size_biased_k: k < 1");
  std::vector<std::size_t> indices(static_cast<std::size_t>(k));
  for (auto& idx : indices) idx = size_biased_index(p, rng);
  for (std::size_t a = 0; a < indices.size(); ++a)
    for (std::size_t b = a + 1; b < indices.size(); ++b)
      if (indices[a] == indices[b]) return std::nullopt;
  std::vector<double> values(indices.size());
  for (std::size_t a = 0; a < indices.size(); ++a) values[a] = p[indices[a]];
  return values;
}

namespace detail {

// int_0^U f(x1) (quadrature on w = (U - x1)^theta, which removes the
// integrable endpoint singularity of m_k at |x| -> 1 for theta < 1).
template <class F>
double integrate_to_boundary(F&& f, double upper, double theta, int nodes) {
  if (upper <= 0.0) return 0.0;
  const double w_max = std::pow(upper, theta);
  return gl_integrate(
      [&](double w) {
        const double x1 =
            std::clamp(upper - std::pow(w, 1.0 / theta), 0.0, upper);
        const double jacobian = std::pow(w, 1.0 / theta - 1.0) / theta;
        return f(x1) * jacobian;
      },
      0.0, w_max, nodes);
}

}  // namespace detail

// int_0^1 m_k(x1, x) dx1 - (1 - |x|) m_{k-1}(x) for x of dimension k-1
// (m_k extended by zero outside the open simplex, m_0 = 1).
inline double marginalization_residual(double theta, int k,
                                       const std::vector<double>& x,
                                       int quadrature_nodes = 64) {
  if (k < 1) throw std::invalid_argument("marginalization_residual: k < 1");
  if (x.size() != static_cast<std::size_t>(k - 1))
    throw std::invalid_argument("marginalization_residual: x must have k-1 coords");
  double tail_sum = 0.0;
  for (double xi : x) tail_sum += xi;
  if (tail_sum >= 1.0)
    throw std::domain_error("marginalization_residual: |x| >= 1");
  const double upper = 1.0 - tail_sum;

  std::vector<double> args(static_cast<std::size_t>(k));
  std::copy(x.begin(), x.end(), args.begin() + 1);
  const double integral = detail::integrate_to_boundary(
      [&](double x1) {
        args[0] = x1;
        return density_mk(theta, args);
      },
      upper, theta, quadrature_nodes);

  const double rhs = upper * (k == 1 ? 1.0 : density_mk(theta, x));
  return integral - rhs;
}

// Signed residual of the stationary balance relation satisfied by the
// correlation densities m_k under the kernel with uniform splitting measure
// (beta_m = 1, beta_s = theta; the relation is homogeneous in the betas, so
// only their ratio matters). Creation terms: a merge of two parts forming a
// part at x_i; a split of some part z > x_i leaving a piece at x_i; a split
// of a part at x_i + x_l repopulating boxes i and l at once. Destruction
// terms: a tuple part merging with anything (within-tuple merges counted
// once) or being split.
namespace detail {

struct BalanceTerms {
  double creation;
  double destruction;
};

inline BalanceTerms functional_equation_terms(double theta, int k,
                                              const std::vector<double>& x,
                                              int nodes, double beta_m) {
  const double beta_s = beta_m * theta;
  double s = 0.0;
  for (double xi : x) s += xi;

  std::vector<double> buffer;
  buffer.reserve(static_cast<std::size_t>(k) + 1);

  // merge creation: beta_m sum_i x_i int_0^{x_i} m_{k+1}(.., z, x_i - z, ..) dz
  double merge_creation = 0.0;
  for (int i = 0; i < k; ++i) {
    buffer.assign(x.begin(), x.end());
    buffer.push_back(0.0);
    const double xi = x[static_cast<std::size_t>(i)];
    merge_creation +=
        xi * gl_integrate(
                 [&](double z) {
                   buffer[static_cast<std::size_t>(i)] = z;
                   buffer.back() = xi - z;
                   return density_mk(theta, buffer);
                 },
                 0.0, xi, nodes);
  }
  merge_creation *= beta_m;

  // split creation, single box: 2 beta_s sum_i x_i int_{x_i}^1 m_k(.., z, ..) dz,
  // taken in the form with the upper-limit integral eliminated:
  //   2 beta_s sum_i x_i [ (1 - (s - x_i)) m_{k-1}(x_-i)
  //                        - int_0^{x_i} m_k(.., z, ..) dz ].
  double split_creation = 0.0;
  for (int i = 0; i < k; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    buffer.assign(x.begin(), x.end());
    const double inner = gl_integrate(
        [&](double z) {
          buffer[static_cast<std::size_t>(i)] = z;
          return density_mk(theta, buffer);
        },
        0.0, xi, nodes);
    buffer.assign(x.begin(), x.end());
    buffer.erase(buffer.begin() + i);
    const double m_rest = (k == 1) ? 1.0 : density_mk(theta, buffer);
    split_creation += xi * ((1.0 - (s - xi)) * m_rest - inner);
  }
  split_creation *= 2.0 * beta_s;

  // split creation, two boxes at once: beta_s sum_{i != l} x_i x_l
  // m_{k-1}(x with x_i, x_l replaced by x_i + x_l).
  double pair_creation = 0.0;
  if (k >= 2) {
    for (int i = 0; i < k; ++i) {
      for (int l = i + 1; l < k; ++l) {
        buffer.clear();
        for (int t = 0; t < k; ++t)
          if (t != i && t != l) buffer.push_back(x[static_cast<std::size_t>(t)]);
        buffer.push_back(x[static_cast<std::size_t>(i)] +
                         x[static_cast<std::size_t>(l)]);
        pair_creation += 2.0 * x[static_cast<std::size_t>(i)] *
                         x[static_cast<std::size_t>(l)] *
                         density_mk(theta, buffer);
      }
    }
    pair_creation *= beta_s;
  }

  // destruction: 2 beta_m sum_i x_i (1 - x_i) + beta_s sum_i x_i^2, less the
  // double-counted within-tuple merges beta_m sum_{i != l} x_i x_l.
  const double mk = density_mk(theta, x);
  double merge_destruction = 0.0, split_destruction = 0.0, cross = 0.0;
  for (double xi : x) {
    merge_destruction += xi * (1.0 - xi);
    split_destruction += xi * xi;
  }
  cross = s * s - split_destruction;  // sum_{i != l} x_i x_l
  const double destruction =
      (2.0 * beta_m * merge_destruction + beta_s * split_destruction -
       beta_m * cross) *
      mk;

  return {merge_creation + split_creation + pair_creation, destruction};
}

}  // namespace detail

inline double functional_equation_residual(double theta, int k,
                                           const std::vector<double>& x,
                                           int quadrature_nodes = 64) {
  if (k < 1) throw std::invalid_argument("functional_equation_residual: k < 1");
  if (x.size() != static_cast<std::size_t>(k))
    throw std::invalid_argument("functional_equation_residual: need k coords");
  double s = 0.0;
  for (double xi : x) {
    if (!(xi > 0.0))
      throw std::domain_error("functional_equation_residual: coords must be > 0");
    s += xi;
  }
  if (s >= 1.0) throw std::domain_error("functional_equation_residual: |x| >= 1");
  for (std::size_t a = 0; a < x.size(); ++a)
    for (std::size_t b = a + 1; b < x.size(); ++b)
      if (x[a] == x[b])
        throw std::domain_error(
            "functional_equation_residual: coords must be distinct");
  const auto terms =
      detail::functional_equation_terms(theta, k, x, quadrature_nodes, 1.0);
  return terms.creation - terms.destruction;
}

}  // namespace cfpd
