#pragma once

// The coagulation-fragmentation transition kernel
//
//   K(p,.) = 2 bm sum_{i<j} p_i p_j delta_{M_ij p}
//          + bs sum_i p_i^2 int delta_{S_i^u p} dsigma(u)
//          + (1 - bm |p|^2 + (bm - bs) |p|_2^2) delta_p
//
// in three forms: stochastic one-step sampling, exact transition
// enumeration for atomic sigma, and the analytic operator applied to test
// functions. Also the closed-form conditional expected increments of the
// threshold part count and of the power sums Z_k.
//
// step() follows the sampling story (size-bias a pair of parts, then accept
// a merge with probability bm or a split with probability bs), which
// reproduces the kernel exactly on the simplex |p| = 1. For |p| < 1 the
// story normalizes the weights while the kernel display does not; the
// enumeration and operator forms follow the display there, and that regime
// is exercised by no experiment. The per-step cost is linear in the number
// of parts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cfpd/partition.hpp"
#include "cfpd/quadrature.hpp"
#include "cfpd/rng.hpp"
#include "cfpd/sigma.hpp"

#include <json.hpp>

namespace cfpd {

struct KernelParams {
  double beta_m;
  double beta_s;

  KernelParams(double bm, double bs) : beta_m(bm), beta_s(bs) {
    if (!(bm > 0.0) || bm > 1.0 || !(bs > 0.0) || bs > 1.0)
      throw std::invalid_argument("KernelParams: betas must be in (0,1]");
  }

  double theta() const { return beta_s / beta_m; }

  // (beta_m, beta_s) in (0,1]^2 realizing a given theta = beta_s/beta_m.
  static KernelParams for_theta(double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("theta must be > 0");
    return theta >= 1.0 ? KernelParams(1.0 / theta, 1.0)
                        : KernelParams(1.0, theta);
  }
};

struct StepAction {
  enum class Kind { merge, split, stay };
  Kind kind = Kind::stay;
  std::size_t i = 0;
  std::size_t j = 0;
  double u = 0.0;
};

namespace detail {

inline std::size_t size_biased_scan(const std::vector<double>& parts,
                                    double mass, Rng& rng) {
  const double r = rng.uniform01() * mass;
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    cum += parts[i];
    if (r < cum) return i;
  }
  return parts.size() - 1;
}

}  // namespace detail

// One step of the sampling story on raw part storage. Draw order is fixed:
// two size-biased indices, one accept uniform, then (only on a split) the
// sigma draw, so trajectories are reproducible per (seed, params, sigma).
inline StepAction sample_step_action(const std::vector<double>& parts,
                                     double mass, const KernelParams& params,
                                     const SigmaSpec& sigma, Rng& rng) {
  StepAction act;
  const std::size_t a = detail::size_biased_scan(parts, mass, rng);
  const std::size_t b = detail::size_biased_scan(parts, mass, rng);
  const double accept = rng.uniform01();
  if (a != b) {
    if (accept < params.beta_m) {
      act.kind = StepAction::Kind::merge;
      act.i = std::min(a, b);
      act.j = std::max(a, b);
    }
  } else {
    if (accept < params.beta_s) {
      act.kind = StepAction::Kind::split;
      act.i = a;
      act.u = sigma.sample(rng);
    }
  }
  return act;
}

inline Partition step(const Partition& p, const KernelParams& params,
                      const SigmaSpec& sigma, Rng& rng) {
  const StepAction act = sample_step_action(p.parts(), p.mass(), params, sigma, rng);
  switch (act.kind) {
    case StepAction::Kind::merge:
      return merge(p, act.i, act.j);
    case StepAction::Kind::split:
      return split(p, act.i, act.u);
    case StepAction::Kind::stay:
      return p;
  }
  return p;
}

struct Transition {
  Partition state;
  double probability;
};

struct TransitionTable {
  std::vector<Transition> outcomes;
  double lazy_probability = 0.0;

  double total() const {
    double t = lazy_probability;
    for (const auto& o : outcomes) t += o.probability;
    return t;
  }

  // Probability of reaching `target` in one step (lazy mass excluded).
  double probability_of(const Partition& target,
                        double tol = kStructTol) const {
    double prob = 0.0;
    for (const auto& o : outcomes)
      if (approx_equal(o.state, target, tol)) prob += o.probability;
    return prob;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& o : outcomes) {
      nlohmann::ordered_json e;
      e["p"] = cfpd::to_json(o.state);
      e["prob"] = o.probability;
      arr.push_back(e);
    }
    j["outcomes"] = arr;
    j["lazy"] = lazy_probability;
    return j;
  }
};

// Exact one-step outcome law from a finite state, for atomic sigma (finitely
// many split outcomes). Follows the kernel display with raw part weights:
// merge {i,j} carries 2 bm p_i p_j, split (i, atom x) carries bs p_i^2 w(x),
// and the lazy remainder is 1 - bm|p|^2 + (bm-bs)|p|_2^2. Outcomes that
// coincide as multisets (partwise within 1e-12) are coalesced.
inline TransitionTable enumerate_transitions(const Partition& p,
                                             const KernelParams& params,
                                             const SigmaSpec& sigma) {
  if (!sigma.is_atomic())
    throw std::invalid_argument(
        "enumerate_transitions: sigma must be atomic");
  std::vector<Transition> raw;
  raw.reserve(p.size() * (p.size() + 1) / 2 + p.size() * sigma.atoms().size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      raw.push_back({merge(p, i, j), 2.0 * params.beta_m * p[i] * p[j]});
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (const auto& [location, weight] : sigma.atoms()) {
      raw.push_back(
          {split(p, i, location), params.beta_s * p[i] * p[i] * weight});
    }
  }

  std::sort(raw.begin(), raw.end(), [](const Transition& a, const Transition& b) {
    const auto& x = a.state.parts();
    const auto& y = b.state.parts();
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  TransitionTable table;
  for (auto& t : raw) {
    if (!table.outcomes.empty() &&
        approx_equal(table.outcomes.back().state, t.state)) {
      table.outcomes.back().probability += t.probability;
    } else {
      table.outcomes.push_back(std::move(t));
    }
  }
  const double m2 = p.mass() * p.mass();
  const double z2 = l2_norm_sq(p);
  table.lazy_probability =
      1.0 - params.beta_m * m2 + (params.beta_m - params.beta_s) * z2;
  return table;
}

// Exact conditional expectation E[f(p(1)) | p(0) = p]: the merge double sum
// is summed over stored parts, the split integral is handled by
// sigma.expect_split (Gauss-Legendre for continuous sigma, exact for atoms).
template <class F>
double apply_kernel(F&& f, const Partition& p, const KernelParams& params,
                    const SigmaSpec& sigma, int quadrature_nodes = 64) {
  const double f0 = f(p);
  double sum = f0;
  Partition scratch = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      merge_into(p, i, j, scratch);
      sum += 2.0 * params.beta_m * p[i] * p[j] * (f(scratch) - f0);
    }
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double w = params.beta_s * p[i] * p[i];
    if (w == 0.0) continue;
    sum += w * sigma.expect_split(
                   [&](double u) {
                     split_into(p, i, u, scratch);
                     return f(scratch) - f0;
                   },
                   quadrature_nodes);
  }
  return sum;
}

// Expected one-step increment of the part count X_0:
// Delta_0 = -bm |p|^2 + (bm + bs) |p|_2^2.
inline double increment_part_count(const Partition& p,
                                   const KernelParams& params) {
  const double m2 = p.mass() * p.mass();
  const double z2 = l2_norm_sq(p);
  return -params.beta_m * m2 + (params.beta_m + params.beta_s) * z2;
}

// Expected one-step increment of X_eps = #{i : p_i > eps}, the exact
// three-term formula: an all-pairs merge term, a split term through the
// sigma-masses of (eps/p_i, 1/2] and [1 - eps/p_i, 1/2], and the diagonal
// correction that converts the merge sum from i != j to all (i,j).
// At eps = 0 this reduces to increment_part_count.
inline double increment_threshold_count(const Partition& p,
                                        const KernelParams& params,
                                        const SigmaSpec& sigma, double eps) {
  if (eps < 0.0) throw std::invalid_argument("increment_threshold_count: eps < 0");
  const auto& parts = p.parts();
  double merge_term = 0.0;
  for (double pi : parts) {
    for (double pj : parts) {
      const double both_small_sum_big =
          (pi <= eps && pj <= eps && eps < pi + pj) ? 1.0 : 0.0;
      const double both_big = (eps < pi && eps < pj) ? 1.0 : 0.0;
      merge_term += pi * pj * (both_small_sum_big - both_big);
    }
  }
  merge_term *= params.beta_m;

  double split_term = 0.0;
  double diagonal_term = 0.0;
  for (double pi : parts) {
    if (eps < pi) {
      split_term += pi * pi *
                    (sigma.mass_above(eps / pi) - sigma.mass_from(1.0 - eps / pi));
    }
    const double diag_small = (pi <= eps && eps < 2.0 * pi) ? 1.0 : 0.0;
    const double diag_big = (eps < pi) ? 1.0 : 0.0;
    diagonal_term += pi * pi * (diag_small - diag_big);
  }
  split_term *= params.beta_s;
  diagonal_term *= -params.beta_m;

  return merge_term + split_term + diagonal_term;
}

// Expected one-step increment of Z_k = sum_i p_i^k:
//   Delta_k = bm sum_{i!=j} p_i p_j ((p_i+p_j)^k - p_i^k - p_j^k)
//           + bs sum_i p_i^{2+k} (int (t^k + (1-t)^k) dsigma(t) - 1).
inline double increment_z_moment(const Partition& p, const KernelParams& params,
                                 const SigmaSpec& sigma, int k,
                                 int quadrature_nodes = 64) {
  if (k < 1) throw std::invalid_argument("increment_z_moment: k must be >= 1");
  const auto& parts = p.parts();
  double merge_term = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      const double pi = parts[i], pj = parts[j];
      merge_term += 2.0 * pi * pj *
                    (std::pow(pi + pj, k) - std::pow(pi, k) - std::pow(pj, k));
    }
  }
  merge_term *= params.beta_m;

  const double split_factor = sigma.moment_symmetric(k, quadrature_nodes) - 1.0;
  double split_term = 0.0;
  for (double pi : parts) split_term += std::pow(pi, k + 2);
  split_term *= params.beta_s * split_factor;

  return merge_term + split_term;
}

// Expected one-step increment of the n-polynomial P_n = prod Z_j^{n_j},
// evaluated as the exact conditional expectation minus the current value.
inline double increment_n_polynomial(const Partition& p,
                                     const KernelParams& params,
                                     const SigmaSpec& sigma,
                                     const std::vector<int>& multiplicity,
                                     int quadrature_nodes = 64) {
  const double current = n_polynomial(p, multiplicity);
  const double expected = apply_kernel(
      [&multiplicity](const Partition& q) {
        return n_polynomial(q, multiplicity);
      },
      p, params, sigma, quadrature_nodes);
  return expected - current;
}

// mu(s) K(s,{t}) - mu(t) K(t,{s}). A nonzero value on an invariant mu
// exhibits failure of detailed balance; with a gap in the support of an
// atomic sigma, K(t,{s}) can vanish exactly while K(s,{t}) > 0.
inline double detailed_balance_gap(const Partition& s, const Partition& t,
                                   const KernelParams& params,
                                   const SigmaSpec& sigma, double mu_s,
                                   double mu_t) {
  const TransitionTable from_s = enumerate_transitions(s, params, sigma);
  const TransitionTable from_t = enumerate_transitions(t, params, sigma);
  return mu_s * from_s.probability_of(t) - mu_t * from_t.probability_of(s);
}

}  // namespace cfpd
