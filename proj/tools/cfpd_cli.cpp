// Command-line driver: configure, run, and report every experiment.
//
// Exit codes: 0 when all verdicts pass (or a run only reports), 1 when any
// verdict fails, 2 on usage errors. All randomness flows from --seed; a
// config echo is written alongside every report so runs can be reproduced
// exactly (flags > config file > defaults).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cfpd/chain_runner.hpp"
#include "cfpd/functionals.hpp"
#include "cfpd/harness.hpp"
#include "cfpd/kernel.hpp"
#include "cfpd/partition.hpp"
#include "cfpd/poisson_dirichlet.hpp"
#include "cfpd/sigma.hpp"

#include <CLI11.hpp>
#include <json.hpp>

namespace {

using nlohmann::ordered_json;

cfpd::SigmaSpec parse_sigma(const std::string& text) {
  try {
    return cfpd::SigmaSpec::from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ValidationError("--sigma", std::string("bad JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--sigma", e.what());
  }
}

std::vector<cfpd::Fn> parse_functionals(const std::string& csv) {
  std::vector<cfpd::Fn> fns;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) fns.push_back(cfpd::fn_from_name(item));
  }
  if (fns.empty()) throw CLI::ValidationError("--functionals", "empty list");
  return fns;
}

int emit_report(const cfpd::ExperimentReport& report,
                const std::string& out_dir) {
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::string base = cfpd::write_report_files(report, out_dir);
    std::cerr << "wrote " << base << ".{json,csv,config.json}\n";
  }
  std::cerr << report.name << ": " << report.verdict << " in "
            << static_cast<long>(report.wall_ms) << " ms\n";
  std::cout << report.to_json().dump(2) << "\n";
  return report.verdict == "fail" ? 1 : 0;
}

// Values from a config file fill every flag the user did not pass
// explicitly (flags > config file > defaults). Config keys use the flag
// names with '-' or '_' interchangeable; JSON values map onto flag text.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.contains("pd") && j["pd"].is_object()) {  // flattened PD parameters
    for (const char* key : {"truncation", "eps"})
      if (j["pd"].contains(key) && !j.contains(key)) j[key] = j["pd"][key];
  }
  for (const auto& [key, value] : j.items()) {
    std::string flag = key;
    for (auto& c : flag)
      if (c == '_') c = '-';
    auto* opt = cmd->get_option_no_throw("--" + flag);
    if (opt == nullptr) opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr || opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      bool first = true;
      for (const auto& item : value) {
        if (!first) text += ",";
        text += item.is_string() ? item.get<std::string>() : item.dump();
        first = false;
      }
    } else {
      text = value.dump();
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "coagulation-fragmentation chains on partitions of [0,1]: simulation, "
      "exact transition enumeration, Poisson-Dirichlet sampling, and "
      "statistical verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string sigma_text = R"({"type":"uniform"})";
  double beta_m = 1.0, beta_s = 1.0, theta = 1.0;
  double truncation = 1e-8, eps = 1e-6;
  std::uint64_t seed = 0;
  std::uint64_t steps = 1'000'000, burn_in = 100'000, max_steps = 100'000;
  std::uint64_t samples = 100'000;
  int replicas = 16, workers = 1, nodes = 64, count = 1, k = 2, points = 20;
  double tolerance = 1e-6;
  std::string functionals_text = "Z2,Z3,p1,Z2sq";
  std::string sampler = "stick";
  std::string state_text;
  std::string k_values_text = "2,3";
  std::string n_vectors_text = "2";
  bool control = false, diagnose = false;

  auto add_common = [&](CLI::App* cmd, bool with_sigma) {
    cmd->add_option("--seed", seed, "master RNG seed (required; all randomness flows from it)")
        ->required();
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("-o,--out", out_dir, "output directory for {json,csv,config.json} reports");
    cmd->add_option("--workers", workers, "worker pool size (results do not depend on it)");
    if (with_sigma)
      cmd->add_option("--sigma", sigma_text,
                      R"(splitting measure, e.g. {"type":"uniform"} | {"type":"power_law","a":0.5} | {"type":"atomic","atoms":[[0.5,1.0]]})");
  };

  // --- sample-pd -----------------------------------------------------------
  auto* sample_pd = app.add_subcommand(
      "sample-pd", "draw Poisson-Dirichlet partitions (JSON array per line)");
  add_common(sample_pd, false);
  sample_pd->add_option("--theta", theta, "PD parameter")->required();
  sample_pd->add_option("--n", count, "number of partitions");
  sample_pd->add_option("--sampler", sampler, "stick | poisson");
  sample_pd->add_option("--truncation", truncation, "stick tail-mass bound");
  sample_pd->add_option("--eps", eps, "Poisson intensity lower cutoff");

  // --- run-chain ------------------------------------------------------------
  auto* run_chain = app.add_subcommand(
      "run-chain",
      "Cesaro averages from the single-block state; CSV columns: replica, "
      "seed, steps, mean_<functional>..., min_part_count, raw_min_margin");
  add_common(run_chain, true);
  run_chain->add_option("--beta-m", beta_m, "merge probability in (0,1]");
  run_chain->add_option("--beta-s", beta_s, "split probability in (0,1]");
  run_chain->add_option("--steps", steps, "steps per replica");
  run_chain->add_option("--burn-in", burn_in, "steps dropped from the estimate");
  run_chain->add_option("--replicas", replicas, "independent replicas");
  run_chain->add_option("--functionals", functionals_text,
                        "comma list of Z2,Z3,p1,p1p2,Z2sq,X0,min_part");
  run_chain->add_flag("--diagnose", diagnose,
                      "also emit the support diagnostic (X0/min-part medians)");

  // --- classify-sigma ---------------------------------------------------------
  auto* classify_cmd = app.add_subcommand(
      "classify-sigma",
      "support/recurrence classification from the two integral criteria");
  classify_cmd->add_option("--sigma", sigma_text, "splitting measure JSON")
      ->required();

  // --- test-invariance --------------------------------------------------------
  auto* invariance = app.add_subcommand(
      "test-invariance",
      "paired one-step invariance test under PD(theta); CSV columns: "
      "replica, seed, samples, diff_<functional>...");
  add_common(invariance, true);
  invariance->add_option("--beta-m", beta_m, "merge probability");
  invariance->add_option("--beta-s", beta_s, "split probability");
  invariance->add_option("--samples", samples, "PD samples");
  invariance->add_option("--replicas", replicas, "chunks for the SE");
  invariance->add_option("--functionals", functionals_text, "comma list");
  invariance->add_option("--nodes", nodes, "quadrature nodes");
  invariance->add_option("--truncation", truncation, "stick tail-mass bound");
  invariance->add_flag("--control", control,
                       "negative control: pass when invariance visibly breaks");

  // --- test-reversibility ------------------------------------------------------
  auto* reversibility = app.add_subcommand(
      "test-reversibility",
      "E[G*KF] vs E[F*KG] under PD(theta); CSV columns: replica, seed, "
      "samples, balance_<pair-index>...");
  add_common(reversibility, true);
  reversibility->add_option("--beta-m", beta_m, "merge probability");
  reversibility->add_option("--beta-s", beta_s, "split probability");
  reversibility->add_option("--samples", samples, "PD samples");
  reversibility->add_option("--replicas", replicas, "chunks for the SE");
  reversibility->add_option("--nodes", nodes, "quadrature nodes");
  reversibility->add_option("--truncation", truncation, "stick tail-mass bound");

  // --- test-increments ---------------------------------------------------------
  auto* increments = app.add_subcommand(
      "test-increments",
      "mean expected increments of Z_k and P_n under PD(theta); CSV "
      "columns: replica, seed, samples, mean_dZ<k>..., mean_dP_<n>...");
  add_common(increments, true);
  increments->add_option("--beta-m", beta_m, "merge probability");
  increments->add_option("--beta-s", beta_s, "split probability");
  increments->add_option("--samples", samples, "PD samples");
  increments->add_option("--replicas", replicas, "chunks for the SE");
  increments->add_option("--nodes", nodes, "quadrature nodes");
  increments->add_option("--truncation", truncation, "stick tail-mass bound");
  increments->add_option("--k-values", k_values_text, "comma list of Z_k orders");
  increments->add_option("--n-vectors", n_vectors_text,
                         "semicolon list of multiplicity vectors, e.g. 2;0,1");

  // --- estimate-hitting ----------------------------------------------------------
  auto* hitting = app.add_subcommand(
      "estimate-hitting",
      "return time to the single-block state; CSV columns: replica, seed, "
      "return_time (-1 when censored)");
  add_common(hitting, true);
  hitting->add_option("--beta-m", beta_m, "merge probability");
  hitting->add_option("--beta-s", beta_s, "split probability");
  hitting->add_option("--max-steps", max_steps, "censoring horizon");
  hitting->add_option("--replicas", replicas, "independent replicas");

  // --- check-mk -------------------------------------------------------------
  auto* check_mk = app.add_subcommand(
      "check-mk",
      "marginalization and balance-relation residuals of the closed-form "
      "correlation densities");
  add_common(check_mk, false);
  check_mk->add_option("--theta", theta, "PD parameter")->required();
  check_mk->add_option("--k", k, "max tuple dimension");
  check_mk->add_option("--points", points, "random evaluation points per k");
  check_mk->add_option("--nodes", nodes, "quadrature nodes");
  check_mk->add_option("--tolerance", tolerance, "max |residual| for pass");

  // --- enumerate ------------------------------------------------------------
  auto* enumerate_cmd = app.add_subcommand(
      "enumerate", "exact one-step transition table for an atomic sigma");
  enumerate_cmd
      ->add_option("--state", state_text, "partition JSON, e.g. [0.5,0.3,0.2]")
      ->required();
  enumerate_cmd->add_option("--sigma", sigma_text, "atomic sigma JSON")
      ->required();
  enumerate_cmd->add_option("--beta-m", beta_m, "merge probability");
  enumerate_cmd->add_option("--beta-s", beta_s, "split probability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config_path.empty()) {
      apply_config_file(cmd, config_path);
    }

    if (cmd == sample_pd) {
      cfpd::PDParams pd(theta, truncation, eps);
      cfpd::Rng rng(seed);
      std::optional<cfpd::PoissonPdSampler> poisson;
      if (sampler == "poisson") poisson.emplace(pd);
      else if (sampler != "stick")
        throw CLI::ValidationError("--sampler", "must be stick or poisson");
      for (int i = 0; i < count; ++i) {
        const cfpd::Partition p = poisson ? poisson->sample(rng)
                                          : cfpd::sample_pd_stick(pd, rng);
        std::cout << cfpd::to_json(p).dump() << "\n";
      }
      return 0;
    }

    if (cmd == run_chain) {
      cfpd::CesaroConfig cfg;
      cfg.params = cfpd::KernelParams(beta_m, beta_s);
      cfg.sigma = parse_sigma(sigma_text);
      cfg.steps = steps;
      // default burn-in: 10% of the step budget
      if (run_chain->count("--burn-in") == 0) burn_in = steps / 10;
      cfg.burn_in = burn_in;
      cfg.functionals = parse_functionals(functionals_text);
      cfg.replicas = replicas;
      cfg.seed = seed;
      cfg.workers = workers;
      auto report = cfpd::run_cesaro(cfg);
      int rc = emit_report(report, out_dir);
      if (diagnose) {
        cfpd::DiagnoseConfig dcfg;
        dcfg.params = cfg.params;
        dcfg.sigma = cfg.sigma;
        dcfg.steps = steps;
        dcfg.seed = seed;
        rc = std::max(rc, emit_report(cfpd::diagnose_support(dcfg), out_dir));
      }
      return rc;
    }

    if (cmd == classify_cmd) {
      const auto classification = cfpd::classify(parse_sigma(sigma_text));
      std::cout << classification.to_json().dump() << "\n";
      return 0;
    }

    if (cmd == invariance) {
      cfpd::InvarianceConfig cfg;
      cfg.pd = cfpd::PDParams(beta_s / beta_m, truncation, eps);
      cfg.params = cfpd::KernelParams(beta_m, beta_s);
      cfg.sigma = parse_sigma(sigma_text);
      cfg.functionals = parse_functionals(functionals_text);
      cfg.samples = samples;
      cfg.replicas = replicas;
      cfg.seed = seed;
      cfg.workers = workers;
      cfg.nodes = nodes;
      cfg.expect_invariance = !control;
      return emit_report(cfpd::test_invariance_onestep(cfg), out_dir);
    }

    if (cmd == reversibility) {
      cfpd::ReversibilityConfig cfg;
      cfg.pd = cfpd::PDParams(beta_s / beta_m, truncation, eps);
      cfg.params = cfpd::KernelParams(beta_m, beta_s);
      cfg.sigma = parse_sigma(sigma_text);
      cfg.samples = samples;
      cfg.replicas = replicas;
      cfg.seed = seed;
      cfg.workers = workers;
      cfg.nodes = nodes;
      return emit_report(cfpd::test_reversibility(cfg), out_dir);
    }

    if (cmd == increments) {
      cfpd::IncrementsConfig cfg;
      cfg.pd = cfpd::PDParams(beta_s / beta_m, truncation, eps);
      cfg.params = cfpd::KernelParams(beta_m, beta_s);
      cfg.sigma = parse_sigma(sigma_text);
      cfg.k_values.clear();
      {
        std::stringstream ss(k_values_text);
        std::string item;
        while (std::getline(ss, item, ','))
          if (!item.empty()) cfg.k_values.push_back(std::stoi(item));
      }
      cfg.n_vectors.clear();
      {
        std::stringstream groups(n_vectors_text);
        std::string group;
        while (std::getline(groups, group, ';')) {
          std::vector<int> nvec;
          std::stringstream ss(group);
          std::string item;
          while (std::getline(ss, item, ','))
            if (!item.empty()) nvec.push_back(std::stoi(item));
          if (!nvec.empty()) cfg.n_vectors.push_back(nvec);
        }
      }
      cfg.samples = samples;
      cfg.replicas = replicas;
      cfg.seed = seed;
      cfg.workers = workers;
      cfg.nodes = nodes;
      return emit_report(cfpd::test_increment_identities(cfg), out_dir);
    }

    if (cmd == hitting) {
      cfpd::HittingConfig cfg;
      cfg.params = cfpd::KernelParams(beta_m, beta_s);
      cfg.sigma = parse_sigma(sigma_text);
      cfg.max_steps = max_steps;
      cfg.replicas = replicas;
      cfg.seed = seed;
      cfg.workers = workers;
      return emit_report(cfpd::estimate_hitting_time(cfg), out_dir);
    }

    if (cmd == check_mk) {
      cfpd::Rng rng(seed);
      double max_marginalization = 0.0, max_balance = 0.0;
      ordered_json details = ordered_json::array();
      for (int dim = 1; dim <= k; ++dim) {
        for (int pt = 0; pt < points; ++pt) {
          // Random point of the open simplex with positive distinct coords
          // and total mass bounded away from 1.
          std::vector<double> x(static_cast<std::size_t>(dim));
          double total = 0.0;
          for (auto& xi : x) {
            xi = 0.01 + 0.99 * rng.uniform01();
            total += xi;
          }
          const double scale = (0.05 + 0.80 * rng.uniform01()) / total;
          for (auto& xi : x) xi *= scale;
          const std::vector<double> tail(x.begin() + 1, x.end());
          const double marg = std::abs(
              cfpd::marginalization_residual(theta, dim, tail, nodes));
          max_marginalization = std::max(max_marginalization, marg);
          double bal = 0.0;
          if (dim <= 2) {
            bal = std::abs(
                cfpd::functional_equation_residual(theta, dim, x, nodes));
            max_balance = std::max(max_balance, bal);
          }
        }
      }
      ordered_json out;
      out["theta"] = theta;
      out["k_max"] = k;
      out["points"] = points;
      out["max_marginalization_residual"] = max_marginalization;
      out["max_balance_residual"] = max_balance;
      out["tolerance"] = tolerance;
      const bool pass =
          max_marginalization <= tolerance && max_balance <= tolerance;
      out["verdict"] = pass ? "pass" : "fail";
      std::cout << out.dump(2) << "\n";
      return pass ? 0 : 1;
    }

    if (cmd == enumerate_cmd) {
      const cfpd::Partition p =
          cfpd::partition_from_json(nlohmann::json::parse(state_text));
      const auto table = cfpd::enumerate_transitions(
          p, cfpd::KernelParams(beta_m, beta_s), parse_sigma(sigma_text));
      std::cout << table.to_json().dump(2) << "\n";
      return 0;
    }

    return 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad JSON input: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
