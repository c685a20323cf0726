#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfpd/partition.hpp"
#include "cfpd/stats.hpp"
#include "oracles.hpp"

using namespace cfpd;

TEST_CASE("merge: examples and errors") {
  CHECK(merge(Partition({0.5, 0.3, 0.2}), 1, 2) == Partition({0.5, 0.5}));
  CHECK(merge(Partition({0.5, 0.5}), 0, 1) == Partition({1.0}));
  CHECK(merge(Partition({0.4, 0.3, 0.2, 0.1}), 0, 3) ==
        Partition({0.5, 0.3, 0.2}));

  const Partition p({0.6, 0.4});
  CHECK_THROWS_AS(merge(p, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(merge(p, 0, 2), std::out_of_range);
}

TEST_CASE("split: examples, symmetry, errors") {
  CHECK(split(Partition({1.0}), 0, 0.5) == Partition({0.5, 0.5}));
  CHECK(approx_equal(split(Partition({0.5, 0.3, 0.2}), 0, 0.5),
                     Partition({0.3, 0.25, 0.25, 0.2}), 1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Partition p = oracles::random_state(rng);
    const std::size_t i = static_cast<std::size_t>(rng.uniform01() * p.size());
    const double u = rng.uniform_open01();
    CHECK(approx_equal(split(p, i, u), split(p, i, 1.0 - u), 1e-15));
  }

  const Partition p({0.7, 0.3});
  CHECK_THROWS_AS(split(p, 2, 0.5), std::out_of_range);
  CHECK_THROWS_AS(split(p, 0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(split(p, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(split(p, 0, 1e-305), std::domain_error);
}

TEST_CASE("construction: zeros dropped, invariants enforced") {
  const Partition p({0.2, 0.5, 0.0, 0.3});
  CHECK(p.size() == 3);
  CHECK(p[0] == 0.5);
  CHECK(p[2] == 0.2);
  CHECK_THROWS_AS(Partition({0.5, -0.1}), std::invalid_argument);
  CHECK_THROWS_AS(Partition({0.8, 0.8}), std::invalid_argument);
  CHECK_THROWS_AS(Partition(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("norm preservation and sortedness across operations") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Partition p = oracles::random_state(rng);
    if (p.size() >= 2) {
      std::size_t i = static_cast<std::size_t>(rng.uniform01() * p.size());
      std::size_t j = static_cast<std::size_t>(rng.uniform01() * p.size());
      if (i == j) j = (j + 1) % p.size();
      const Partition merged = merge(p, i, j);
      CHECK(merged.mass() == p.mass());  // bitwise
      for (std::size_t k = 0; k + 1 < merged.size(); ++k)
        CHECK(merged[k] >= merged[k + 1]);
    }
    const std::size_t i = static_cast<std::size_t>(rng.uniform01() * p.size());
    const double u = rng.uniform_open01();
    const Partition fractured = split(p, i, u);
    CHECK(std::abs(fractured.mass() - p.mass()) <= 1e-15 * p.mass());
    for (std::size_t k = 0; k + 1 < fractured.size(); ++k)
      CHECK(fractured[k] >= fractured[k + 1]);
  }
}

TEST_CASE("split then merge recovers the partition") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Partition p = oracles::random_state(rng);
    const std::size_t i = static_cast<std::size_t>(rng.uniform01() * p.size());
    const double u = 0.02 + 0.96 * rng.uniform01();
    const Partition fractured = split(p, i, u);
    // locate the two fragments in the sorted result
    const double a = p[i] * u, b = p[i] * (1.0 - u);
    std::size_t ia = fractured.size(), ib = fractured.size();
    for (std::size_t k = 0; k < fractured.size(); ++k) {
      if (ia == fractured.size() && std::abs(fractured[k] - a) <= 1e-15) {
        ia = k;
        continue;
      }
      if (ib == fractured.size() && std::abs(fractured[k] - b) <= 1e-15) ib = k;
    }
    REQUIRE(ia < fractured.size());
    REQUIRE(ib < fractured.size());
    CHECK(approx_equal(merge(fractured, ia, ib), p, 1e-15));
  }
}

TEST_CASE("z_moment: examples") {
  CHECK(z_moment(Partition({1.0}), 1) == 1.0);
  CHECK(z_moment(Partition({1.0}), 5) == 1.0);
  CHECK(z_moment(Partition({0.5, 0.5}), 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(z_moment(Partition({0.5, 0.3, 0.2}), 3) ==
        doctest::Approx(0.16).epsilon(1e-14));
  CHECK_THROWS_AS(z_moment(Partition({0.5, 0.5}), 0), std::invalid_argument);
}

TEST_CASE("n_polynomial: examples") {
  const Partition p({0.5, 0.3, 0.2});
  CHECK(n_polynomial(p, {1}) == doctest::Approx(z_moment(p, 2)).epsilon(1e-15));
  CHECK(n_polynomial(Partition({0.5, 0.5}), {2, 1}) ==
        doctest::Approx(0.0625).epsilon(1e-14));
  CHECK(n_polynomial(p, {0, 1}) == doctest::Approx(0.16).epsilon(1e-14));
  CHECK_THROWS_AS(n_polynomial(p, {}), std::invalid_argument);
  CHECK_THROWS_AS(n_polynomial(p, {1, 0}), std::invalid_argument);
}

TEST_CASE("size_biased_pair: degenerate and two-part laws") {
  Rng rng(17);
  const Partition bar = Partition::single_block();
  for (int t = 0; t < 10; ++t) {
    const auto [a, b] = size_biased_pair(bar, rng);
    CHECK(a == 0);
    CHECK(b == 0);
  }

  const Partition half({0.5, 0.5});
  std::array<std::uint64_t, 4> cells{};
  const std::uint64_t n = 100'000;
  for (std::uint64_t t = 0; t < n; ++t) {
    const auto [a, b] = size_biased_pair(half, rng);
    ++cells[2 * a + b];
  }
  for (const auto c : cells) {
    const double freq = static_cast<double>(c) / static_cast<double>(n);
    CHECK(std::abs(freq - 0.25) <= 4.0 * oracles::binomial_se(0.25, n));
  }
}

TEST_CASE("size_biased_pair: frequency and chi-square on a 3-part state") {
  Rng rng(19);
  const Partition p({0.5, 0.3, 0.2});
  const std::uint64_t n = 100'000;
  std::array<std::uint64_t, 3> index_counts{};
  std::array<std::uint64_t, 9> pair_counts{};
  for (std::uint64_t t = 0; t < n; ++t) {
    const auto [a, b] = size_biased_pair(p, rng);
    ++index_counts[a];
    ++pair_counts[3 * a + b];
  }
  const double freq0 =
      static_cast<double>(index_counts[0]) / static_cast<double>(n);
  CHECK(std::abs(freq0 - 0.5) <= 4.0 * oracles::binomial_se(0.5, n));

  double chi2 = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      const double expected = p[a] * p[b] * static_cast<double>(n);
      const double observed = static_cast<double>(pair_counts[3 * a + b]);
      chi2 += (observed - expected) * (observed - expected) / expected;
    }
  }
  CHECK(chi_square_p_value(chi2, 8) > 0.01);
}

TEST_CASE("partition json round trip") {
  const Partition p({0.5, 0.3, 0.2});
  const auto j = to_json(p);
  CHECK(j.dump() == "[0.5,0.3,0.2]");
  CHECK(partition_from_json(nlohmann::json::parse(j.dump())) == p);
}
