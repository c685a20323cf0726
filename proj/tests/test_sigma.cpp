#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cfpd/sigma.hpp"
#include "cfpd/stats.hpp"

using namespace cfpd;

namespace {

// Fine tabulation of the power-law inverse CDF Q(v) = v^(1/a) / 2.
SigmaSpec tabulated_power_law(double a, int knots = 2048) {
  std::vector<double> v(static_cast<std::size_t>(knots)),
      x(static_cast<std::size_t>(knots));
  for (int i = 0; i < knots; ++i) {
    v[static_cast<std::size_t>(i)] =
        static_cast<double>(i) / static_cast<double>(knots - 1);
    x[static_cast<std::size_t>(i)] =
        0.5 * std::pow(v[static_cast<std::size_t>(i)], 1.0 / a);
  }
  x[0] = 1e-12;  // keep the support inside (0, 1/2]
  v.front() = 0.0;
  v.back() = 1.0;
  return SigmaSpec::tabulated(v, x);
}

}  // namespace

TEST_CASE("sampling: draws live in (0, 1/2]") {
  Rng rng(3);
  for (const auto& sigma :
       {SigmaSpec::uniform(), SigmaSpec::power_law(0.5), SigmaSpec::power_law(3.0),
        SigmaSpec::atomic({{0.1, 0.5}, {0.5, 0.5}}), tabulated_power_law(2.0)}) {
    for (int t = 0; t < 20'000; ++t) {
      const double u = sigma.sample(rng);
      CHECK(u > 0.0);
      CHECK(u <= 0.5);
    }
  }
}

TEST_CASE("sampling: single atom is constant") {
  Rng rng(5);
  const auto sigma = SigmaSpec::atomic({{0.5, 1.0}});
  for (int t = 0; t < 100; ++t) CHECK(sigma.sample(rng) == 0.5);
}

TEST_CASE("sampling: uniform mean") {
  Rng rng(7);
  const auto sigma = SigmaSpec::uniform();
  const std::uint64_t n = 1'000'000;
  KahanSum sum;
  for (std::uint64_t t = 0; t < n; ++t) sum.add(sigma.sample(rng));
  const double mean = sum.value() / static_cast<double>(n);
  const double se = std::sqrt(1.0 / 48.0 / static_cast<double>(n));
  CHECK(std::abs(mean - 0.25) <= 4.0 * se);
}

TEST_CASE("sampling: power law KS against the closed-form CDF") {
  Rng rng(9);
  const auto sigma = SigmaSpec::power_law(2.0);
  std::vector<double> draws(10'000);
  for (auto& d : draws) d = sigma.sample(rng);
  const auto ks = ks_test_one_sample(
      draws, [](double x) { return std::pow(2.0 * x, 2.0); });
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("sampling: atomic mixture frequencies") {
  Rng rng(11);
  const auto sigma = SigmaSpec::atomic({{0.1, 0.2}, {0.3, 0.3}, {0.5, 0.5}});
  const std::uint64_t n = 200'000;
  std::uint64_t c1 = 0, c2 = 0, c3 = 0;
  for (std::uint64_t t = 0; t < n; ++t) {
    const double u = sigma.sample(rng);
    if (u == 0.1) ++c1;
    else if (u == 0.3) ++c2;
    else if (u == 0.5) ++c3;
  }
  CHECK(c1 + c2 + c3 == n);
  CHECK(std::abs(static_cast<double>(c1) / n - 0.2) <= 4.0 * std::sqrt(0.16 / n));
  CHECK(std::abs(static_cast<double>(c2) / n - 0.3) <= 4.0 * std::sqrt(0.21 / n));
  CHECK(std::abs(static_cast<double>(c3) / n - 0.5) <= 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("integral 1/x: closed forms") {
  CHECK(SigmaSpec::uniform().integral_one_over_x().is_infinite());
  CHECK(SigmaSpec::atomic({{0.5, 1.0}}).integral_one_over_x().value() ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(SigmaSpec::power_law(2.0).integral_one_over_x().value() ==
        doctest::Approx(4.0).epsilon(1e-15));
  CHECK(SigmaSpec::power_law(3.0).integral_one_over_x().value() ==
        doctest::Approx(3.0).epsilon(1e-15));
  CHECK(SigmaSpec::power_law(0.5).integral_one_over_x().is_infinite());
  CHECK(SigmaSpec::power_law(1.0).integral_one_over_x().is_infinite());
}

TEST_CASE("integral 1/cdf: closed forms") {
  CHECK(SigmaSpec::uniform().integral_inverse_cdf().is_infinite());
  CHECK(SigmaSpec::atomic({{0.5, 1.0}}).integral_inverse_cdf().is_infinite());
  CHECK(SigmaSpec::power_law(0.5).integral_inverse_cdf().value() ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(SigmaSpec::power_law(2.0).integral_inverse_cdf().is_infinite());
}

TEST_CASE("quadrature route agrees with closed forms on the power family") {
  for (double a : {0.5, 2.0, 3.0}) {
    const auto sigma = SigmaSpec::power_law(a);
    const auto i1 = sigma.integral_one_over_x();
    const auto i1q = sigma.integral_one_over_x_quadrature();
    CHECK(i1.is_finite() == i1q.is_finite());
    if (i1.is_finite())
      CHECK(std::abs(i1q.value() - i1.value()) <= 1e-6 * i1.value());

    const auto i2 = sigma.integral_inverse_cdf();
    const auto i2q = sigma.integral_inverse_cdf_quadrature();
    CHECK(i2.is_finite() == i2q.is_finite());
    if (i2.is_finite())
      CHECK(std::abs(i2q.value() - i2.value()) <= 1e-6 * i2.value());
  }
}

TEST_CASE("tabulated sigma behaves like the law it tabulates") {
  // Log-spaced tabulation of the power-law quantile Q(v) = v^(1/2)/2; the
  // leading table segment is an atom-like sliver at Q(1e-6), so the
  // tabulated law has support bounded away from 0 and a finite 1/x
  // integral, computable segment by segment in closed form.
  std::vector<double> v{0.0};
  std::vector<double> x{0.999 * 0.5 * std::pow(1e-6, 0.5)};
  for (int i = 0; i <= 512; ++i) {
    const double vi = std::pow(10.0, -6.0 + 6.0 * i / 512.0);
    v.push_back(std::min(vi, 1.0));
    x.push_back(0.5 * std::pow(v.back(), 0.5));
  }
  v.back() = 1.0;
  x.back() = 0.5;
  const auto tab = SigmaSpec::tabulated(v, x);

  const auto exact = SigmaSpec::power_law(2.0);
  for (double point : {0.05, 0.1, 0.2, 0.3, 0.45})
    CHECK(tab.cdf(point) == doctest::Approx(exact.cdf(point)).epsilon(1e-4));

  // segment-exact oracle: int dv/Q over a linear segment is
  // (dv/dx) log(x_hi/x_lo), or dv/x on a flat segment
  double i1_exact = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const double dv = v[i + 1] - v[i];
    const double dx = x[i + 1] - x[i];
    i1_exact += dx > 0.0 ? dv / dx * std::log(x[i + 1] / x[i]) : dv / x[i];
  }
  const auto i1 = tab.integral_one_over_x();
  REQUIRE(i1.is_finite());
  CHECK(i1.value() == doctest::Approx(i1_exact).epsilon(1e-6));
  CHECK(i1.value() == doctest::Approx(4.0).epsilon(0.02));  // head is truncated

  // the CDF vanishes below the first knot, so the transience integral
  // diverges
  CHECK(tab.integral_inverse_cdf().is_infinite());

  // support bounded away from zero also when the head knot is tiny
  const auto tiny_headed = tabulated_power_law(2.0);
  const auto tiny_i1 = tiny_headed.integral_one_over_x();
  REQUIRE(tiny_i1.is_finite());
  CHECK(tiny_i1.value() > 4.0);
}

TEST_CASE("classify: examples") {
  const auto uniform = classify(SigmaSpec::uniform());
  CHECK(uniform.support == ChainClassification::Support::infinite);
  CHECK(uniform.recurrence == ChainClassification::Recurrence::unknown);

  const auto atom = classify(SigmaSpec::atomic({{0.5, 1.0}}));
  CHECK(atom.support == ChainClassification::Support::finite);
  CHECK(atom.recurrence == ChainClassification::Recurrence::positive_recurrent);
  CHECK(atom.integral_one_over_x.value() == doctest::Approx(2.0));

  const auto heavy = classify(SigmaSpec::power_law(0.5));
  CHECK(heavy.support == ChainClassification::Support::infinite);
  CHECK(heavy.recurrence == ChainClassification::Recurrence::transient);

  const auto light = classify(SigmaSpec::power_law(2.0));
  CHECK(light.support == ChainClassification::Support::finite);
  CHECK(light.recurrence == ChainClassification::Recurrence::positive_recurrent);
}

TEST_CASE("cdf properties: monotone, bounded, consistent with interval masses") {
  Rng rng(131);
  const std::vector<SigmaSpec> specs{
      SigmaSpec::uniform(), SigmaSpec::power_law(0.5), SigmaSpec::power_law(2.0),
      SigmaSpec::atomic({{0.1, 0.25}, {0.3, 0.25}, {0.5, 0.5}}),
      tabulated_power_law(2.0)};
  for (const auto& sigma : specs) {
    for (int t = 0; t < 200; ++t) {
      double x = 0.6 * rng.uniform01();
      double y = 0.6 * rng.uniform01();
      if (x > y) std::swap(x, y);
      CHECK(sigma.cdf(x) <= sigma.cdf(y) + 1e-15);
      CHECK(sigma.cdf_left(x) <= sigma.cdf(x) + 1e-15);
      CHECK(sigma.cdf(x) >= 0.0);
      CHECK(sigma.cdf(y) <= 1.0);
      CHECK(sigma.mass_above(x) + sigma.cdf(x) ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(sigma.cdf(0.5) == 1.0);
    CHECK(sigma.cdf(0.0) == 0.0);
  }
}

TEST_CASE("classification is a pure function of the two integrals") {
  Rng rng(101);
  std::vector<SigmaSpec> specs{SigmaSpec::uniform(),
                               SigmaSpec::atomic({{0.5, 1.0}})};
  for (double a : {0.3, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0})
    specs.push_back(SigmaSpec::power_law(a));
  for (int t = 0; t < 5; ++t) {
    std::vector<SigmaSpec::Atom> atoms{{0.05 + 0.2 * rng.uniform01(), 0.5},
                                       {0.3 + 0.2 * rng.uniform01(), 0.5}};
    specs.push_back(SigmaSpec::atomic(atoms));
  }
  for (const auto& sigma : specs) {
    const auto c = classify(sigma);
    CHECK((c.support == ChainClassification::Support::finite) ==
          c.integral_one_over_x.is_finite());
    CHECK((c.recurrence == ChainClassification::Recurrence::positive_recurrent) ==
          c.integral_one_over_x.is_finite());
    if (c.recurrence == ChainClassification::Recurrence::transient)
      CHECK(c.integral_inverse_cdf.is_finite());
    if (c.integral_one_over_x.is_finite())
      CHECK_FALSE(c.integral_inverse_cdf.is_finite());
  }
}

TEST_CASE("interval masses honour open/closed endpoints on atoms") {
  const auto sigma = SigmaSpec::atomic({{0.1, 0.25}, {0.5, 0.75}});
  CHECK(sigma.mass_above(0.1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(sigma.mass_above(0.0999999) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sigma.mass_from(0.5) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(sigma.mass_from(0.5000001) == 0.0);
  CHECK(sigma.cdf(0.1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sigma.cdf_left(0.1) == 0.0);
}

TEST_CASE("json round trip and validation errors") {
  for (const auto& sigma :
       {SigmaSpec::uniform(), SigmaSpec::power_law(0.5),
        SigmaSpec::atomic({{0.5, 1.0}}), tabulated_power_law(2.0, 32)}) {
    const auto j = sigma.to_json();
    const auto back = SigmaSpec::from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.to_json() == j);
  }
  CHECK(SigmaSpec::from_json(nlohmann::json::parse(
                                 R"({"type":"power_law","a":0.5})"))
            .power() == 0.5);

  CHECK_THROWS_AS(SigmaSpec::power_law(0.0), std::invalid_argument);
  CHECK_THROWS_AS(SigmaSpec::atomic({{0.6, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(SigmaSpec::atomic({{0.5, 0.9}}), std::invalid_argument);
  CHECK_THROWS_AS(SigmaSpec::from_json(nlohmann::json::parse(
                      R"({"type":"nope"})")),
                  std::invalid_argument);
}

TEST_CASE("moment_symmetric closed forms vs independent quadrature") {
  for (int k : {1, 2, 3, 5}) {
    const double uniform_value = SigmaSpec::uniform().moment_symmetric(k);
    CHECK(uniform_value == doctest::Approx(2.0 / (k + 1)).epsilon(1e-14));
    for (double a : {0.5, 2.0}) {
      const auto sigma = SigmaSpec::power_law(a);
      const double closed = sigma.moment_symmetric(k);
      // independent route in quantile space: t = Q(v) = v^(1/a)/2
      const double numeric = adaptive_simpson(
          [&](double v) {
            const double t = 0.5 * std::pow(v, 1.0 / a);
            return std::pow(t, k) + std::pow(1.0 - t, k);
          },
          0.0, 1.0, 1e-13);
      CHECK(closed == doctest::Approx(numeric).epsilon(1e-9));
    }
  }
  CHECK(SigmaSpec::uniform().moment_symmetric(1) ==
        doctest::Approx(1.0).epsilon(1e-15));
}
