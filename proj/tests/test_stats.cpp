#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfpd/rng.hpp"
#include "cfpd/stats.hpp"

using namespace cfpd;

TEST_CASE("kolmogorov survival function at tabulated quantiles") {
  // classical two-sided critical values: Q(1.3581) ~ 0.05, Q(1.6276) ~ 0.01
  CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(2e-3));
  CHECK(kolmogorov_survival(0.5) > 0.95);
  CHECK(kolmogorov_survival(3.0) < 1e-6);
}

TEST_CASE("chi-square upper tail at tabulated quantiles") {
  CHECK(chi_square_p_value(5.991, 2) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(chi_square_p_value(20.090, 8) == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(chi_square_p_value(0.0, 4) == doctest::Approx(1.0));
}

TEST_CASE("one-sample KS is calibrated on true uniforms") {
  // With the null true, p-values should rarely be tiny; count rejections at
  // the 0.01 level over repeated draws.
  Rng rng(41);
  int rejections = 0;
  const int runs = 200;
  for (int r = 0; r < runs; ++r) {
    std::vector<double> sample(500);
    for (auto& x : sample) x = rng.uniform01();
    if (ks_test_one_sample(sample, [](double x) { return x; }).p_value < 0.01)
      ++rejections;
  }
  CHECK(rejections <= 8);  // expect ~2

  // and a shifted alternative is rejected essentially always
  std::vector<double> shifted(500);
  for (auto& x : shifted) x = std::pow(rng.uniform01(), 2.0);
  CHECK(ks_test_one_sample(shifted, [](double x) { return x; }).p_value < 1e-6);
}

TEST_CASE("two-sample KS separates distinct laws and accepts equal ones") {
  Rng rng(43);
  std::vector<double> a(2000), b(2000), c(2000);
  for (auto& x : a) x = rng.uniform01();
  for (auto& x : b) x = rng.uniform01();
  for (auto& x : c) x = std::pow(rng.uniform01(), 1.5);
  CHECK(ks_test_two_sample(a, b).p_value > 0.01);
  CHECK(ks_test_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("running stat merge equals single-pass accumulation") {
  Rng rng(47);
  RunningStat whole, left, right;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform01() * 3.0 - 1.0;
    whole.add(x);
    (i < 400 ? left : right).add(x);
  }
  left.merge(right);
  CHECK(left.count() == whole.count());
  CHECK(left.mean() == doctest::Approx(whole.mean()).epsilon(1e-13));
  CHECK(left.variance() == doctest::Approx(whole.variance()).epsilon(1e-12));
}

TEST_CASE("compensated summation keeps tiny terms that plain addition drops") {
  KahanSum kahan;
  double naive = 0.0;
  kahan.add(1.0);
  naive += 1.0;
  for (int i = 0; i < 10'000'000; ++i) {
    kahan.add(1e-16);
    naive += 1e-16;
  }
  const double expected = 1.0 + 1e-16 * 1e7;
  CHECK(std::abs(kahan.value() - expected) <= 1e-15);
  CHECK(std::abs(naive - expected) > 1e-10);  // plain addition loses them
}
