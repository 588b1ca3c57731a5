#pragma once

// Configuration-driven experiments: JSON configs, spec construction for each
// example, replicate fitting, summary reports and the process exit-code
// contract shared by the command-line tool and the tests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <exception>
#include <json.hpp>

#include "mixbf/bfcore.hpp"
#include "mixbf/mcmc.hpp"

namespace mixbf::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // I/O and other runtime failures
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitStrict = 4,
};

// --- configuration -----------------------------------------------------------

struct ChainSettings {
  std::uint64_t iterations = 100000;
  std::optional<std::uint64_t> burnin;  // resolved to 10% of iterations on load
  std::uint64_t thin = 1;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
};

struct BalanceSettings {
  bool enabled = false;
  std::uint64_t pilot_iterations = 20000;
  std::size_t rounds = 6;
};

struct RegressionSimulation {
  std::size_t n = 42;
  double intercept = 3000.0;
  double slope = 185.0;
  double sd = 300.0;
  double z_noise = 0.5;
  std::uint64_t seed = 1;
};

struct Ex1Config {
  std::string data;  // CSV; empty means simulate
  std::string y_column = "y";
  std::string x_column = "x";
  std::string z_column = "z";
  RegressionSimulation simulate;
  std::vector<double> mu0{3000.0, 185.0};
  std::vector<double> v0{1e6, 1e4};  // diagonal
  double a0 = 3.0;
  double b0 = 1.0 / (2.0 * 300.0 * 300.0);
  bool oracle = true;
};

struct LogisticSimulation {
  std::size_t n = 150;
  std::vector<double> coef{-0.5, 0.25, 0.2};
  std::uint64_t seed = 1;
};

struct Ex2Config {
  std::string data;
  std::string response_column = "y";
  std::vector<std::string> covariate_columns{"x1", "x2"};
  std::vector<std::size_t> model_columns{1, 2, 3};
  LogisticSimulation simulate;
  double prior_sd = 10.0;
  double proposal_scale = 0.1;
  std::size_t oracle_samples = 20000;  // importance samples per model; 0 disables
};

struct Ex3Config {
  std::string data;  // CSV with column "time"; empty means summary statistics
  std::size_t n = 5;
  double horizon = 10.0;
  double sum = 36.0;
  double prior_rate = 1.0;
};

struct Ex4Config {
  std::string data;  // removal-time CSV; empty means simulate from the preset
  std::string preset = "B";
  std::uint64_t simulation_seed = 1;
  bool require_major = true;
  std::size_t susceptibles = 50;
  double shape_m1 = 1.0;
  std::optional<double> shape_m2;  // defaults to the preset's M2 shape
  double delta = 1.0;
  std::optional<std::size_t> infection_updates;
};

struct Ex5Config {
  std::string data;  // removal-time CSV; empty means the gastroenteritis counts
  double horizon = 10.0;
  std::size_t population = 89;
  double mu = 4.0;
  double theta = 0.1;
  double prior_shape = 1.0;
  double prior_rate = 1.0;
  std::optional<std::size_t> moves_per_sweep;
};

struct ToyConfig {
  double log_ratio = 3.912023005428146;  // log 50
};

struct ExperimentConfig {
  std::string experiment = "ex3";  // ex1 | ex2 | ex3 | ex4 | ex5 | toy-ratio
  std::vector<double> dirichlet_p;  // empty means all ones
  bool collapse_allocation = false;
  BalanceSettings balance;
  ChainSettings chain;
  std::string output_dir = "mixbf-out";

  Ex1Config ex1;
  Ex2Config ex2;
  Ex3Config ex3;
  Ex4Config ex4;
  Ex5Config ex5;
  ToyConfig toy;

  // Throws ConfigError.
  void validate() const;
};

// Defaults for one experiment kind, with every optional resolved.
ExperimentConfig default_config(const std::string& experiment);

// Fills in resolvable defaults (burnin, shape_m2, dirichlet_p length).
void resolve(ExperimentConfig& config);

// Serialises the common settings plus the block of the selected experiment.
nlohmann::json to_json(const ExperimentConfig& config);

// Unknown keys, wrong types and invalid values raise ConfigError. The result
// is resolved and validated.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// --- experiments ---------------------------------------------------------------

struct Experiment {
  mcmc::SpecFactory factory;
  std::vector<std::string> model_names;
  std::string description;
  // Log marginal likelihoods up to a common constant from an independent
  // method, when one is cheap enough; empty otherwise.
  std::vector<double> oracle_log_marginals;
  std::string oracle_method;
};

// Loads or simulates the data once; the factory builds independent specs.
Experiment build_experiment(const ExperimentConfig& config);

std::size_t model_count(const ExperimentConfig& config);

// --- reports -------------------------------------------------------------------

struct Aggregate {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; NaN for fewer than two values
  double se = 0.0;  // sd / sqrt(count)
};

Aggregate aggregate(const std::vector<double>& values);

struct ReplicateSummary {
  std::uint64_t seed = 0;
  std::vector<double> rao_blackwell;
  std::vector<double> rb_se;
  std::vector<double> plain;
  std::vector<double> plain_se;
  std::vector<std::uint64_t> occupancy;
  std::vector<double> ess;
  std::vector<bool> reliable;
  std::vector<bool> bounds_violation;
  std::uint64_t switches = 0;
  std::optional<SquareMatrix<double>> general;  // B_ij, general solver
  std::optional<SquareMatrix<double>> fast;     // Dirichlet fast path
  std::optional<SquareMatrix<double>> occupancy_bf;
  std::string general_error;
  std::string fast_error;
  std::string occupancy_error;

  // Bounds violated, general solve failed, or a non-positive or non-finite
  // Bayes factor came out of it.
  bool violation() const;
};

ReplicateSummary summarize_replicate(const mcmc::ChainOutput& out);

struct SummaryReport {
  std::string experiment;
  std::string description;
  std::vector<std::string> model_names;
  std::vector<double> dirichlet_p;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  std::uint64_t burnin = 0;
  std::uint64_t thin = 1;
  std::vector<ReplicateSummary> replicates;
  std::vector<double> oracle_log_marginals;
  std::string oracle_method;
  double wall_seconds = 0.0;

  std::size_t models() const noexcept { return model_names.size(); }
  // B_ij from the general solver over replicates where it succeeded.
  Aggregate bf_general(std::size_t i, std::size_t j) const;
  Aggregate bf_fast(std::size_t i, std::size_t j) const;
  Aggregate bf_occupancy(std::size_t i, std::size_t j) const;
  Aggregate rao_blackwell(std::size_t i) const;
  std::size_t violations() const;
};

SummaryReport make_report(const ExperimentConfig& config, const Experiment& experiment,
                          const std::vector<mcmc::ChainOutput>& outputs, double wall_seconds);

std::string format_human(const SummaryReport& report);
std::string format_key_values(const SummaryReport& report);

// 0 unless strict and some replicate has a violation, then kExitStrict.
int strict_exit_code(const SummaryReport& report, bool strict);

// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// --- simulation ------------------------------------------------------------------

struct SimulateOptions {
  std::string model = "sir";  // sir | poisson
  std::string preset;         // A | B | C; empty uses the explicit SIR parameters
  std::size_t susceptibles = 50;
  double beta = 1.0;
  double period_shape = 1.0;
  double period_rate = 1.0;
  bool mass_action = false;
  bool major_only = false;    // redraw minor outbreaks
  double lambda = 1.0;
  double horizon = 10.0;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;
  std::filesystem::path out = "mixbf-sim";
};

struct SimulatedFile {
  std::filesystem::path path;     // removal or event times, column "time"
  std::filesystem::path events;   // SIR only: "time,type" with type +1 infection, -1 removal
  std::uint64_t seed = 0;
  std::size_t count = 0;          // removals or events
  bool major = false;
};

// Writes one dataset per replicate plus manifest.json when replicates > 1.
std::vector<SimulatedFile> simulate(const SimulateOptions& options);

// --- fit pipeline ----------------------------------------------------------------

struct FitOptions {
  std::size_t threads = 1;
  bool write_files = true;  // config.json, summary.txt, summary.kv, trace CSVs
  bool write_traces = true;
};

// Balancing pilot (if enabled), replicate chains, report, output files.
SummaryReport fit(const ExperimentConfig& config, const FitOptions& options);

}  // namespace mixbf::cli
