// mixbf: simulate datasets, fit mixture chains, evaluate oracles.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mixbf/cli.hpp"
#include "mixbf/error.hpp"
#include "mixbf/oracle.hpp"

namespace {

using namespace mixbf;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool strict = false;
  std::size_t threads = 1;
};

struct FitArgs {
  std::string config;
  std::string experiment;
  bool print_config = false;
  bool no_trace = false;
  std::optional<std::uint64_t> iterations;
  std::optional<std::size_t> replicates;
};

struct OracleArgs {
  std::size_t n = 5;
  double horizon = 10.0;
  double sum = 36.0;
  double theta = 1.0;
  std::string config;
  std::size_t samples = 20000;
};

cli::ExperimentConfig fit_config(const FitArgs& a, const Globals& g) {
  cli::ExperimentConfig c =
      a.config.empty() ? cli::default_config(a.experiment.empty() ? "ex3" : a.experiment)
                       : cli::load_config(a.config);
  if (!a.config.empty() && !a.experiment.empty() && a.experiment != c.experiment)
    throw ConfigError("--experiment " + a.experiment + " disagrees with the config's " + c.experiment);
  bool changed = false;
  if (g.seed) c.chain.seed = *g.seed;
  if (g.out) c.output_dir = *g.out;
  if (a.iterations) c.chain.iterations = *a.iterations, c.chain.burnin.reset(), changed = true;
  if (a.replicates) c.chain.replicates = *a.replicates, changed = true;
  if (changed) {
    c.validate();
    cli::resolve(c);
  }
  return c;
}

int run_fit(const FitArgs& a, const Globals& g) {
  const auto config = fit_config(a, g);
  if (a.print_config) {
    std::cout << cli::to_json(config).dump(2) << '\n';
    return cli::kExitOk;
  }
  cli::FitOptions opt;
  opt.threads = g.threads;
  opt.write_traces = !a.no_trace;
  const auto report = cli::fit(config, opt);
  std::cout << cli::format_human(report);
  std::cout << "output written to " << config.output_dir << '\n';
  return cli::strict_exit_code(report, g.strict);
}

int run_simulate(cli::SimulateOptions o, const Globals& g) {
  if (g.seed) o.seed = *g.seed;
  if (g.out) o.out = *g.out;
  const auto files = cli::simulate(o);
  std::cout << "seed " << o.seed << '\n';
  for (const auto& f : files) {
    std::cout << f.path.string() << "  seed " << f.seed << "  count " << f.count;
    if (o.model == "sir") std::cout << (f.major ? "  major" : "  minor");
    std::cout << '\n';
  }
  if (files.size() > 1) std::cout << (o.out / "manifest.json").string() << '\n';
  return cli::kExitOk;
}

void print_marginals(const cli::Experiment& ex) {
  std::cout << std::setprecision(10);
  const auto& lm = ex.oracle_log_marginals;
  for (std::size_t i = 0; i < lm.size(); ++i)
    std::cout << "log m_" << (i + 1) << " (" << ex.model_names[i] << ") = " << lm[i] << '\n';
  for (std::size_t i = 0; i < lm.size(); ++i)
    for (std::size_t j = i + 1; j < lm.size(); ++j)
      std::cout << "B_" << (i + 1) << (j + 1) << " = " << std::exp(lm[i] - lm[j]) << '\n';
  std::cout << "method: " << ex.oracle_method << '\n';
}

int run_oracle(const std::string& which, const OracleArgs& a, const Globals& g) {
  if (which == "ex3") {
    const double lb = oracle::log_analytic_bf_ex3(a.n, a.horizon, a.sum, a.theta);
    std::cout << std::setprecision(10) << "B_12 = " << std::exp(lb) << "\nlog B_12 = " << lb
              << "\nmethod: closed form\n";
    return cli::kExitOk;
  }
  auto c = a.config.empty() ? cli::default_config(which) : cli::load_config(a.config);
  if (c.experiment != which) throw ConfigError("config is for " + c.experiment + ", not " + which);
  if (g.seed) c.chain.seed = *g.seed;
  if (which == "ex1") c.ex1.oracle = true;
  if (which == "ex2") c.ex2.oracle_samples = a.samples;
  print_marginals(cli::build_experiment(c));
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayes factors from mixture hypermodels"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--strict", g.strict, "Exit 4 on bounds violations or a failed solve");
  app.add_option("--threads", g.threads, "Worker threads for replicates")->check(CLI::PositiveNumber);

  cli::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate SIR or Poisson-process data");
  simulate->fallthrough();
  simulate->add_option("--model", sim.model, "sir or poisson")->check(CLI::IsMember({"sir", "poisson"}));
  simulate->add_option("--preset", sim.preset, "SIR scenario A, B or C")->check(CLI::IsMember({"A", "B", "C"}));
  simulate->add_option("--N", sim.susceptibles, "Initial susceptibles");
  simulate->add_option("--beta", sim.beta, "Infection rate");
  simulate->add_option("--shape", sim.period_shape, "Infectious-period shape");
  simulate->add_option("--rate", sim.period_rate, "Infectious-period rate");
  simulate->add_flag("--mass-action", sim.mass_action, "Infection pressure beta S I instead of beta S I / N");
  simulate->add_flag("--major-only", sim.major_only, "Redraw until the final size reaches 20% of N");
  simulate->add_option("--lambda", sim.lambda, "Poisson rate");
  simulate->add_option("--T", sim.horizon, "Poisson observation window");
  simulate->add_option("--replicates", sim.replicates, "Datasets to write");

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Run the mixture sampler and report Bayes factors");
  fitc->fallthrough();
  fitc->add_option("config", fa.config, "JSON config")->check(CLI::ExistingFile);
  fitc->add_option("--experiment", fa.experiment, "Use defaults for this experiment")
      ->check(CLI::IsMember({"ex1", "ex2", "ex3", "ex4", "ex5", "toy-ratio"}));
  fitc->add_flag("--print-config", fa.print_config, "Print the resolved config and exit");
  fitc->add_flag("--no-trace", fa.no_trace, "Skip trace CSVs");
  fitc->add_option("--iterations", fa.iterations, "Override chain.iterations (burnin resets to 10%)");
  fitc->add_option("--replicates", fa.replicates, "Override chain.replicates");

  OracleArgs oa;
  std::string oracle_kind;
  auto* orc = app.add_subcommand("oracle", "Independent marginal-likelihood references");
  orc->fallthrough();
  orc->add_option("kind", oracle_kind, "ex1, ex2 or ex3")->required()->check(CLI::IsMember({"ex1", "ex2", "ex3"}));
  orc->add_option("--n", oa.n, "ex3: event count");
  orc->add_option("--T", oa.horizon, "ex3: window");
  orc->add_option("--S", oa.sum, "ex3: sum of event times");
  orc->add_option("--theta", oa.theta, "ex3: prior rate");
  orc->add_option("--config", oa.config, "ex1/ex2: config supplying data and priors");
  orc->add_option("--samples", oa.samples, "ex2: importance samples per model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  std::string context;
  try {
    if (simulate->parsed()) {
      context = "simulate";
      return run_simulate(sim, g);
    }
    if (fitc->parsed()) {
      context = "fit";
      if (!fa.config.empty()) context += " " + fa.config;
      else if (!fa.experiment.empty()) context += " " + fa.experiment;
      return run_fit(fa, g);
    }
    context = "oracle " + oracle_kind;
    return run_oracle(oracle_kind, oa, g);
  } catch (const std::exception& e) {
    std::cerr << "mixbf " << context << ": " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}
