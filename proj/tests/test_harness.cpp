#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cfpd/harness.hpp"

using namespace cfpd;

namespace {

CesaroConfig small_cesaro(std::uint64_t steps, int replicas, int workers) {
  CesaroConfig cfg;
  cfg.params = KernelParams(1.0, 1.0);
  cfg.sigma = SigmaSpec::uniform();
  cfg.steps = steps;
  cfg.burn_in = steps / 10;
  cfg.functionals = {Fn::z2, Fn::part_count};
  cfg.replicas = replicas;
  cfg.seed = 20250808;
  cfg.workers = workers;
  return cfg;
}

}  // namespace

TEST_CASE("reports are byte-identical across worker counts") {
  const auto one = run_cesaro(small_cesaro(5'000, 8, 1));
  const auto four = run_cesaro(small_cesaro(5'000, 8, 4));
  CHECK(one.to_json().dump() == four.to_json().dump());
  CHECK(one.csv() == four.csv());

  InvarianceConfig inv;
  inv.samples = 4'000;
  inv.replicas = 8;
  inv.seed = 99;
  inv.workers = 1;
  const auto inv_one = test_invariance_onestep(inv);
  inv.workers = 3;
  const auto inv_three = test_invariance_onestep(inv);
  CHECK(inv_one.to_json().dump() == inv_three.to_json().dump());
}

TEST_CASE("replica SE scales like 1/sqrt(replicas)") {
  const auto base = run_cesaro(small_cesaro(2'000, 64, 2));
  const auto wide = run_cesaro(small_cesaro(2'000, 256, 2));
  const double ratio = base.statistics[0].se / wide.statistics[0].se;
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("cesaro run: estimates, exact lower-bound check, raw diagnostic") {
  const auto report = run_cesaro(small_cesaro(20'000, 8, 2));
  REQUIRE(report.statistics.size() == 2);
  CHECK(report.statistics[0].name == "cesaro_mean_Z2");
  // loose window at this scale; the acceptance suite pins 0.5 +- 0.01
  CHECK(std::abs(report.statistics[0].estimate - 0.5) < 0.05);
  CHECK(report.extra["cesaro_bound_all_ok"].get<bool>());
  CHECK(report.extra["min_part_count"].get<std::int64_t>() >= 1);
  CHECK(report.extra.contains("raw_min_margin"));
  CHECK(report.per_replica.size() == 8);
}

TEST_CASE("hitting time: recurrent atom returns fast, never at n = 1") {
  HittingConfig cfg;
  cfg.params = KernelParams(1.0, 1.0);
  cfg.sigma = SigmaSpec::atomic({{0.5, 1.0}});
  cfg.max_steps = 100'000;
  cfg.replicas = 2'000;
  cfg.seed = 7;
  cfg.workers = 2;
  const auto report = estimate_hitting_time(cfg);
  CHECK(report.extra["censored_fraction"].get<double>() == 0.0);
  // beta_s = 1 forces a split first, so the first possible return is n = 2
  CHECK(report.extra["min_return_time"].get<std::int64_t>() >= 2);
  CHECK(report.statistics[0].estimate > 1.0);
}

TEST_CASE("hitting time: uniform sigma censors heavily within a tight budget") {
  HittingConfig cfg;
  cfg.params = KernelParams(1.0, 1.0);
  cfg.sigma = SigmaSpec::uniform();
  cfg.max_steps = 200;
  cfg.replicas = 400;
  cfg.seed = 11;
  cfg.workers = 2;
  const auto report = estimate_hitting_time(cfg);
  CHECK(report.extra["censored_fraction"].get<double>() > 0.0);
}

TEST_CASE("one-step invariance holds under PD(theta) for the uniform kernel") {
  InvarianceConfig cfg;
  cfg.pd = PDParams(1.0);
  cfg.params = KernelParams(1.0, 1.0);
  cfg.samples = 20'000;
  cfg.replicas = 10;
  cfg.seed = 13;
  cfg.workers = 2;
  const auto report = test_invariance_onestep(cfg);
  CHECK(report.verdict == "pass");
  for (const auto& s : report.statistics) CHECK(s.pass);
}

TEST_CASE("negative control: atomic sigma visibly breaks PD invariance") {
  InvarianceConfig cfg;
  cfg.pd = PDParams(1.0);
  cfg.params = KernelParams(1.0, 1.0);
  cfg.sigma = SigmaSpec::atomic({{0.5, 1.0}});
  cfg.functionals = {Fn::z2};
  cfg.samples = 20'000;
  cfg.replicas = 10;
  cfg.seed = 17;
  cfg.workers = 2;
  cfg.expect_invariance = false;
  const auto report = test_invariance_onestep(cfg);
  CHECK(report.verdict == "pass");
  CHECK(report.extra["invariance_broken"].get<bool>());
}

TEST_CASE("reversibility: identical pair gives an identically zero balance") {
  ReversibilityConfig cfg;
  cfg.pairs = {{Fn::z2, Fn::z2}};
  cfg.samples = 500;
  cfg.replicas = 4;
  cfg.seed = 19;
  const auto report = test_reversibility(cfg);
  CHECK(report.statistics[0].estimate == 0.0);
  CHECK(report.statistics[0].se == 0.0);
  CHECK(report.verdict == "pass");
}

TEST_CASE("reversibility balance vanishes within 4 SE at modest scale") {
  ReversibilityConfig cfg;
  cfg.pd = PDParams(1.0);
  cfg.samples = 20'000;
  cfg.replicas = 10;
  cfg.seed = 23;
  cfg.workers = 2;
  const auto report = test_reversibility(cfg);
  CHECK(report.verdict == "pass");
}

TEST_CASE("increment identities vanish within 4 SE at modest scale") {
  IncrementsConfig cfg;
  cfg.pd = PDParams(1.0);
  cfg.k_values = {2, 3};
  cfg.n_vectors = {{2}};
  cfg.samples = 20'000;
  cfg.replicas = 10;
  cfg.seed = 29;
  cfg.workers = 2;
  const auto report = test_increment_identities(cfg);
  CHECK(report.verdict == "pass");
  CHECK(report.statistics.size() == 3);
}

TEST_CASE("support diagnostic: recurrent atom stabilizes, uniform grows") {
  DiagnoseConfig atom;
  atom.params = KernelParams(1.0, 1.0);
  atom.sigma = SigmaSpec::atomic({{0.5, 1.0}});
  atom.steps = 100'000;
  atom.seed = 31;
  const auto atom_report = diagnose_support(atom);
  CHECK(atom_report.verdict == "pass");
  CHECK(atom_report.extra["support_class"] == "finite");

  DiagnoseConfig uniform;
  uniform.params = KernelParams(1.0, 1.0);
  uniform.sigma = SigmaSpec::uniform();
  uniform.steps = 100'000;
  uniform.seed = 31;
  const auto uniform_report = diagnose_support(uniform);
  CHECK(uniform_report.verdict == "pass");
  CHECK(uniform_report.extra["support_class"] == "infinite");
  CHECK(uniform_report.extra["q_longest_nonincreasing_stretch"].get<std::uint64_t>() >=
        1);
}

TEST_CASE("support diagnostic: heavy-tailed splits yield long nonincreasing "
          "min-part stretches") {
  DiagnoseConfig cfg;
  cfg.params = KernelParams(1.0, 1.0);
  cfg.sigma = SigmaSpec::power_law(0.5);
  cfg.steps = 20'000;
  cfg.seed = 37;
  const auto report = diagnose_support(cfg);
  CHECK(report.extra["support_class"] == "infinite");
  // the smallest part survives untouched for long runs when tiny fragments
  // keep being produced
  CHECK(report.extra["q_longest_nonincreasing_stretch"].get<std::uint64_t>() >
        100);
}

TEST_CASE("report files: written, named, and reproducible from the echo") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cfpd_report_test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const auto report = run_cesaro(small_cesaro(2'000, 4, 1));
  const std::string base = write_report_files(report, dir.string());
  CHECK(fs::exists(base + ".json"));
  CHECK(fs::exists(base + ".csv"));
  CHECK(fs::exists(base + ".config.json"));
  CHECK(base.find("cesaro-1.0-uniform-20250808") != std::string::npos);

  std::ifstream echo(base + ".config.json");
  nlohmann::json cfg_echo = nlohmann::json::parse(echo);
  CesaroConfig cfg2;
  cfg2.params = KernelParams(cfg_echo["beta_m"], cfg_echo["beta_s"]);
  cfg2.sigma = SigmaSpec::from_json(cfg_echo["sigma"]);
  cfg2.steps = cfg_echo["steps"];
  cfg2.burn_in = cfg_echo["burn_in"];
  cfg2.functionals.clear();
  for (const auto& fname : cfg_echo["functionals"])
    cfg2.functionals.push_back(fn_from_name(fname.get<std::string>()));
  cfg2.replicas = cfg_echo["replicas"];
  cfg2.seed = cfg_echo["seed"];
  cfg2.z2_target_tolerance = cfg_echo["z2_target_tolerance"];
  const auto replay = run_cesaro(cfg2);
  std::ifstream first_json(base + ".json");
  std::stringstream original;
  original << first_json.rdbuf();
  CHECK(original.str() == replay.to_json().dump(2) + "\n");
  fs::remove_all(dir);
}

TEST_CASE("trajectory stats cover exactly (steps - burn_in)/stride samples") {
  for (std::uint64_t stride : {1ULL, 3ULL}) {
    TrajectoryStats stats({Fn::z2}, 100, stride);
    for (int t = 0; t < 1000; ++t) stats.observe([](Fn) { return 0.25; });
    CHECK(stats.sampled == stats.expected_samples());
    CHECK(stats.mean(0) == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("statistics judge with the 4 SE rule and absolute tolerances") {
  StatLine four_se;
  four_se.estimate = 0.01;
  four_se.se = 0.004;
  four_se.has_target = true;
  four_se.target = 0.0;
  four_se.judge();
  CHECK(four_se.pass);
  four_se.estimate = 0.017;
  four_se.judge();
  CHECK_FALSE(four_se.pass);

  StatLine absolute;
  absolute.estimate = 0.509;
  absolute.se = 1e-4;
  absolute.has_target = true;
  absolute.target = 0.5;
  absolute.rule = StatLine::Rule::absolute;
  absolute.tolerance = 0.01;
  absolute.judge();
  CHECK(absolute.pass);
}
