#pragma once

// Partitions of mass <= 1: finite nonincreasing sequences of positive part
// sizes. The conceptual infinite tail of zeros is implicit; zeros are never
// stored. Values are immutable after construction and cheap to copy.
//
// The total mass is carried through merge/split instead of being re-summed,
// so merging preserves it bit-for-bit and a split perturbs it by at most one
// rounding of u*p_i + (1-u)*p_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cfpd/rng.hpp"

#include <json.hpp>

namespace cfpd {

inline constexpr double kStructTol = 1e-12;  // structural invariant checks
inline constexpr double kMinPart = 1e-300;   // underflow guard for splits

class Partition {
 public:
  explicit Partition(std::vector<double> parts) : parts_(std::move(parts)) {
    std::erase(parts_, 0.0);
    for (double x : parts_) {
      if (!(x > 0.0) || !std::isfinite(x))
        throw std::invalid_argument("Partition: parts must be positive");
    }
    if (parts_.empty()) throw std::invalid_argument("Partition: empty");
    std::sort(parts_.begin(), parts_.end(), std::greater<>());
    mass_ = 0.0;
    for (double x : parts_) mass_ += x;
    if (!(mass_ > 0.0) || mass_ > 1.0 + kStructTol)
      throw std::invalid_argument("Partition: total mass must be in (0, 1]");
  }

  // The single-block state (1, 0, 0, ...).
  static Partition single_block() { return Partition({1.0}); }

  std::size_t size() const { return parts_.size(); }
  double operator[](std::size_t i) const { return parts_[i]; }
  const std::vector<double>& parts() const { return parts_; }
  double mass() const { return mass_; }
  double min_part() const { return parts_.back(); }

  bool operator==(const Partition& o) const { return parts_ == o.parts_; }

  friend Partition merge(const Partition& p, std::size_t i, std::size_t j);
  friend Partition split(const Partition& p, std::size_t i, double u);
  friend void merge_into(const Partition& p, std::size_t i, std::size_t j,
                         Partition& out);
  friend void split_into(const Partition& p, std::size_t i, double u,
                         Partition& out);

 private:
  struct Raw {};
  Partition(Raw, std::vector<double> parts, double mass)
      : parts_(std::move(parts)), mass_(mass) {}

  static void insert_sorted(std::vector<double>& v, double x) {
    v.insert(std::upper_bound(v.begin(), v.end(), x, std::greater<>()), x);
  }

  std::vector<double> parts_;
  double mass_ = 0.0;
};

inline void check_index(const Partition& p, std::size_t i) {
  if (i >= p.size()) throw std::out_of_range("Partition: index out of range");
}

// Writes the merge of parts i and j of p into `out`, reusing its storage.
inline void merge_into(const Partition& p, std::size_t i, std::size_t j,
                       Partition& out) {
  check_index(p, i);
  check_index(p, j);
  if (i == j) throw std::invalid_argument("merge: i == j");
  if (&out == &p) {
    const Partition copy = p;
    merge_into(copy, i, j, out);
    return;
  }
  if (i > j) std::swap(i, j);
  const double merged = p.parts_[i] + p.parts_[j];
  auto& v = out.parts_;
  v.clear();
  v.reserve(p.size() - 1);
  bool placed = false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (k == i || k == j) continue;
    if (!placed && merged >= p.parts_[k]) {
      v.push_back(merged);
      placed = true;
    }
    v.push_back(p.parts_[k]);
  }
  if (!placed) v.push_back(merged);
  out.mass_ = p.mass_;
}

inline Partition merge(const Partition& p, std::size_t i, std::size_t j) {
  Partition out = p;
  merge_into(p, i, j, out);
  return out;
}

// Writes the split of part i at fraction u into `out`, reusing its storage.
inline void split_into(const Partition& p, std::size_t i, double u,
                       Partition& out) {
  check_index(p, i);
  if (!(u > 0.0) || !(u < 1.0))
    throw std::invalid_argument("split: u must be in (0,1)");
  const double a = p.parts_[i] * u;
  const double b = p.parts_[i] * (1.0 - u);
  if (a < kMinPart || b < kMinPart)
    throw std::domain_error("split: fragment underflows below 1e-300");
  auto& v = out.parts_;
  if (&out != &p) v = p.parts_;
  const double removed = v[i];
  v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
  Partition::insert_sorted(v, std::max(a, b));
  Partition::insert_sorted(v, std::min(a, b));
  out.mass_ = p.mass_ + ((a + b) - removed);
}

inline Partition split(const Partition& p, std::size_t i, double u) {
  Partition out = p;
  split_into(p, i, u, out);
  return out;
}

// Z_j(p) = sum_i p_i^j. Diverges conceptually at j = 0 (infinite tail).
inline double z_moment(const Partition& p, int j) {
  if (j < 1) throw std::invalid_argument("z_moment: j must be >= 1");
  double sum = 0.0;
  for (double x : p.parts()) sum += std::pow(x, j);
  return sum;
}

inline double l2_norm_sq(const Partition& p) {
  double sum = 0.0;
  for (double x : p.parts()) sum += x * x;
  return sum;
}

// P_n(p) = prod_{j>=2} Z_j(p)^{n_j}; `multiplicity[0]` is the power of Z_2.
inline double n_polynomial(const Partition& p,
                           const std::vector<int>& multiplicity) {
  if (multiplicity.empty())
    throw std::invalid_argument("n_polynomial: empty multiplicity vector");
  if (multiplicity.back() < 1)
    throw std::invalid_argument("n_polynomial: trailing multiplicity not >=1");
  double prod = 1.0;
  for (std::size_t idx = 0; idx < multiplicity.size(); ++idx) {
    const int nj = multiplicity[idx];
    if (nj < 0) throw std::invalid_argument("n_polynomial: negative power");
    if (nj == 0) continue;
    prod *= std::pow(z_moment(p, static_cast<int>(idx) + 2), nj);
  }
  return prod;
}

// One part index drawn with probability p_i / |p|. Linear scan over the
// descending parts; the size bias keeps the expected scan length short.
inline std::size_t size_biased_index(const Partition& p, Rng& rng) {
  const double r = rng.uniform01() * p.mass();
  double cum = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cum += p[i];
    if (r < cum) return i;
  }
  return p.size() - 1;
}

// Two independent size-biased indices (with replacement; may coincide).
inline std::pair<std::size_t, std::size_t> size_biased_pair(const Partition& p,
                                                            Rng& rng) {
  const std::size_t a = size_biased_index(p, rng);
  const std::size_t b = size_biased_index(p, rng);
  return {a, b};
}

inline bool approx_equal(const Partition& a, const Partition& b,
                         double tol = kStructTol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

inline nlohmann::ordered_json to_json(const Partition& p) {
  return nlohmann::ordered_json(p.parts());
}

inline Partition partition_from_json(const nlohmann::json& j) {
  return Partition(j.get<std::vector<double>>());
}

}  // namespace cfpd
