#pragma once

// In-place trajectory engine. Maintains the sorted part vector together
// with incrementally updated summary statistics (mass, Z_2, Z_3), so a step
// costs O(parts) vector maintenance and O(1) statistics. Consumes random
// draws through the same sample_step_action as the one-shot step(), so a
// ChainRunner trajectory and a step() trajectory from the same seed agree
// state by state.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cfpd/kernel.hpp"
#include "cfpd/partition.hpp"
#include "cfpd/rng.hpp"
#include "cfpd/sigma.hpp"

namespace cfpd {

class ChainRunner {
 public:
  ChainRunner(const Partition& start, const KernelParams& params,
              const SigmaSpec& sigma, Rng rng)
      : params_(params), sigma_(&sigma), rng_(rng), parts_(start.parts()),
        mass_(start.mass()) {
    recompute_moments();
  }

  const std::vector<double>& parts() const { return parts_; }
  double mass() const { return mass_; }
  double z2() const { return z2_; }
  double z3() const { return z3_; }
  double largest_part() const { return parts_.front(); }
  double min_part() const { return parts_.back(); }
  std::size_t part_count() const { return parts_.size(); }
  std::uint64_t steps_taken() const { return steps_; }

  Partition snapshot() const { return Partition(parts_); }

  StepAction::Kind step() {
    const StepAction act =
        sample_step_action(parts_, mass_, params_, *sigma_, rng_);
    switch (act.kind) {
      case StepAction::Kind::merge:
        apply_merge(act.i, act.j);
        break;
      case StepAction::Kind::split:
        apply_split(act.i, act.u);
        break;
      case StepAction::Kind::stay:
        break;
    }
    ++steps_;
    // Periodic refresh caps the drift of the incremental moments.
    if ((steps_ & 0xFFFF) == 0) recompute_moments();
    return act.kind;
  }

 private:
  void apply_merge(std::size_t i, std::size_t j) {
    const double a = parts_[i], b = parts_[j], s = a + b;
    z2_ += s * s - a * a - b * b;
    z3_ += s * s * s - a * a * a - b * b * b;
    parts_.erase(parts_.begin() + static_cast<std::ptrdiff_t>(j));
    parts_.erase(parts_.begin() + static_cast<std::ptrdiff_t>(i));
    insert_sorted(s);
  }

  void apply_split(std::size_t i, double u) {
    const double a = parts_[i];
    const double lo = std::min(u, 1.0 - u) * a;
    const double hi = std::max(u, 1.0 - u) * a;
    z2_ += lo * lo + hi * hi - a * a;
    z3_ += lo * lo * lo + hi * hi * hi - a * a * a;
    mass_ += (lo + hi) - a;
    parts_.erase(parts_.begin() + static_cast<std::ptrdiff_t>(i));
    insert_sorted(hi);
    insert_sorted(lo);
  }

  void insert_sorted(double x) {
    parts_.insert(
        std::upper_bound(parts_.begin(), parts_.end(), x, std::greater<>()),
        x);
  }

  void recompute_moments() {
    z2_ = 0.0;
    z3_ = 0.0;
    for (double x : parts_) {
      z2_ += x * x;
      z3_ += x * x * x;
    }
  }

  KernelParams params_;
  const SigmaSpec* sigma_;
  Rng rng_;
  std::vector<double> parts_;
  double mass_;
  double z2_ = 0.0;
  double z3_ = 0.0;
  std::uint64_t steps_ = 0;
};

}  // namespace cfpd
