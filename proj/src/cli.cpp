#include "mixbf/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "mixbf/csv.hpp"
#include "mixbf/epidemic.hpp"
#include "mixbf/error.hpp"
#include "mixbf/models_basic.hpp"
#include "mixbf/oracle.hpp"

namespace mixbf::cli {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kExperiments{"ex1", "ex2", "ex3", "ex4", "ex5", "toy-ratio"};

std::string block_key(const std::string& experiment) {
  return experiment == "toy-ratio" ? "toy" : experiment;
}

// --- json reading ------------------------------------------------------------

[[noreturn]] void type_error(const std::string& path, const char* expected) {
  throw ConfigError(path + ": expected " + expected);
}

void read_value(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) type_error(path, "a number");
  out = j.get<double>();
}

void read_value(const json& j, const std::string& path, bool& out) {
  if (!j.is_boolean()) type_error(path, "true or false");
  out = j.get<bool>();
}

void read_value(const json& j, const std::string& path, std::string& out) {
  if (!j.is_string()) type_error(path, "a string");
  out = j.get<std::string>();
}

template <std::unsigned_integral T>
void read_value(const json& j, const std::string& path, T& out) {
  if (!j.is_number_unsigned()) type_error(path, "a non-negative integer");
  out = j.get<T>();
}

template <class T>
void read_value(const json& j, const std::string& path, std::vector<T>& out) {
  if (!j.is_array()) type_error(path, "an array");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    T v{};
    read_value(j[i], path + "[" + std::to_string(i) + "]", v);
    out.push_back(v);
  }
}

template <class T>
void read_value(const json& j, const std::string& path, std::optional<T>& out) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  T v{};
  read_value(j, path, v);
  out = v;
}

// Reads known keys of one object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) type_error(path_, "an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, path_ + "." + key, out);
  }

  // Calls fn(sub_reader) if the key is present.
  template <class F>
  void object(const std::string& key, F&& fn) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Reader sub(*it, path_ + "." + key);
      fn(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json optional_json(const auto& v) { return v ? json(*v) : json(nullptr); }

// --- validation helpers ----------------------------------------------------------

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

// --- data ----------------------------------------------------------------------------

std::vector<double> removal_times(const std::string& path, std::optional<double> horizon) {
  auto t = csv::read(path).values("time");
  std::sort(t.begin(), t.end());
  if (horizon) std::erase_if(t, [&](double x) { return x > *horizon; });
  return t;
}

std::vector<double> ex4_removals(const Ex4Config& c) {
  if (!c.data.empty()) return removal_times(c.data, std::nullopt);
  auto sc = epidemic::scenario(c.preset.at(0));
  sc.truth.susceptibles = c.susceptibles;
  Rng rng(c.simulation_seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto outcome = epidemic::simulate_sir(sc.truth, rng);
    if (!c.require_major || epidemic::is_major(outcome, c.susceptibles))
      return outcome.sorted_removals();
  }
  throw NumericalError("no major epidemic in 10000 simulations of preset " + c.preset);
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::string fmt(double v, int precision = 6) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_full(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

// --- configuration -----------------------------------------------------------------

std::size_t model_count(const ExperimentConfig& config) {
  return config.experiment == "ex2" ? config.ex2.model_columns.size() : 2;
}

void ExperimentConfig::validate() const {
  require(std::find(kExperiments.begin(), kExperiments.end(), experiment) != kExperiments.end(),
          "experiment must be one of ex1, ex2, ex3, ex4, ex5, toy-ratio; got '" + experiment + "'");
  const std::size_t n = model_count(*this);
  require(n >= 2, "at least two models are needed");
  require(dirichlet_p.empty() || dirichlet_p.size() == n,
          "dirichlet_p needs " + std::to_string(n) + " entries");
  for (double p : dirichlet_p) require(positive(p), "dirichlet_p entries must be positive");
  require(chain.iterations > 0, "chain.iterations must be positive");
  require(chain.burnin.value_or(chain.iterations / 10) < chain.iterations,
          "chain.burnin must be below chain.iterations");
  require(chain.thin >= 1, "chain.thin must be at least 1");
  require(chain.replicates >= 1, "chain.replicates must be at least 1");
  require(!balance.enabled || (balance.pilot_iterations > 0 && balance.rounds > 0),
          "balance needs positive pilot_iterations and rounds");
  require(!collapse_allocation || experiment == "ex4" || experiment == "ex5",
          "collapse_allocation is available for ex4 and ex5 only");

  if (experiment == "ex1") {
    require(ex1.mu0.size() == 2 && ex1.v0.size() == 2, "ex1.mu0 and ex1.v0 need two entries");
    for (double v : ex1.v0) require(positive(v), "ex1.v0 entries must be positive");
    require(positive(ex1.a0) && positive(ex1.b0), "ex1.a0 and ex1.b0 must be positive");
    if (ex1.data.empty()) {
      require(ex1.simulate.n >= 3, "ex1.simulate.n must be at least 3");
      require(positive(ex1.simulate.sd), "ex1.simulate.sd must be positive");
      require(ex1.simulate.z_noise >= 0.0, "ex1.simulate.z_noise must be non-negative");
    }
  } else if (experiment == "ex2") {
    const auto& mc = ex2.model_columns;
    require(!mc.empty() && mc.front() >= 1, "ex2.model_columns entries must be at least 1");
    for (std::size_t i = 1; i < mc.size(); ++i)
      require(mc[i] > mc[i - 1], "ex2.model_columns must be strictly increasing");
    require(positive(ex2.prior_sd) && positive(ex2.proposal_scale),
            "ex2.prior_sd and ex2.proposal_scale must be positive");
    if (ex2.data.empty()) {
      require(ex2.simulate.coef.size() == mc.back(),
              "ex2.simulate.coef needs one entry per column of the largest model");
      require(ex2.simulate.n >= 1, "ex2.simulate.n must be positive");
    } else {
      require(ex2.covariate_columns.size() + 1 >= mc.back(),
              "ex2.model_columns exceeds the intercept plus covariate columns");
    }
  } else if (experiment == "ex3") {
    require(positive(ex3.horizon), "ex3.horizon must be positive");
    require(positive(ex3.prior_rate), "ex3.prior_rate must be positive");
    if (ex3.data.empty())
      require(ex3.sum >= 0.0 && ex3.sum <= static_cast<double>(ex3.n) * ex3.horizon,
              "ex3.sum must lie in [0, n T]");
  } else if (experiment == "ex4") {
    require(ex4.preset == "A" || ex4.preset == "B" || ex4.preset == "C", "ex4.preset must be A, B or C");
    require(ex4.susceptibles >= 1, "ex4.susceptibles must be positive");
    require(positive(ex4.shape_m1) && positive(ex4.shape_m2.value_or(1.0)),
            "ex4 period shapes must be positive");
    require(positive(ex4.delta), "ex4.delta must be positive");
    require(ex4.infection_updates.value_or(1) >= 1, "ex4.infection_updates must be positive");
  } else if (experiment == "ex5") {
    require(positive(ex5.horizon), "ex5.horizon must be positive");
    require(ex5.population >= 1, "ex5.population must be positive");
    require(positive(ex5.mu), "ex5.mu must be positive");
    require(ex5.theta > 0.0 && ex5.theta < 1.0, "ex5.theta must lie in (0, 1)");
    require(positive(ex5.prior_shape) && positive(ex5.prior_rate), "ex5 priors must be positive");
    require(ex5.moves_per_sweep.value_or(1) >= 1, "ex5.moves_per_sweep must be positive");
  } else {
    require(std::isfinite(toy.log_ratio), "toy.log_ratio must be finite");
  }
}

void resolve(ExperimentConfig& config) {
  if (!config.chain.burnin) config.chain.burnin = config.chain.iterations / 10;
  if (config.experiment == "ex4" && !config.ex4.shape_m2 && !config.ex4.preset.empty())
    config.ex4.shape_m2 = epidemic::scenario(config.ex4.preset.at(0)).m2_shape;
  if (config.dirichlet_p.empty()) config.dirichlet_p.assign(model_count(config), 1.0);
}

namespace {

// Per-experiment defaults that differ from the struct defaults.
ExperimentConfig base_config(const std::string& experiment) {
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment == "toy-ratio") c.dirichlet_p = {1.0, 50.0};
  if (experiment == "ex2") c.balance.enabled = true;
  if (experiment == "ex4" || experiment == "ex5") c.collapse_allocation = true, c.balance.enabled = true;
  return c;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c = base_config(experiment);
  c.validate();
  resolve(c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = c.experiment;
  j["dirichlet_p"] = c.dirichlet_p;
  j["collapse_allocation"] = c.collapse_allocation;
  j["balance"] = {{"enabled", c.balance.enabled},
                  {"pilot_iterations", c.balance.pilot_iterations},
                  {"rounds", c.balance.rounds}};
  j["chain"] = {{"iterations", c.chain.iterations},
                {"burnin", optional_json(c.chain.burnin)},
                {"thin", c.chain.thin},
                {"seed", c.chain.seed},
                {"replicates", c.chain.replicates}};
  j["output_dir"] = c.output_dir;

  json b;
  if (c.experiment == "ex1") {
    const auto& e = c.ex1;
    b = {{"data", e.data},
         {"y_column", e.y_column},
         {"x_column", e.x_column},
         {"z_column", e.z_column},
         {"simulate",
          {{"n", e.simulate.n},
           {"intercept", e.simulate.intercept},
           {"slope", e.simulate.slope},
           {"sd", e.simulate.sd},
           {"z_noise", e.simulate.z_noise},
           {"seed", e.simulate.seed}}},
         {"mu0", e.mu0},
         {"v0", e.v0},
         {"a0", e.a0},
         {"b0", e.b0},
         {"oracle", e.oracle}};
  } else if (c.experiment == "ex2") {
    const auto& e = c.ex2;
    b = {{"data", e.data},
         {"response_column", e.response_column},
         {"covariate_columns", e.covariate_columns},
         {"model_columns", e.model_columns},
         {"simulate", {{"n", e.simulate.n}, {"coef", e.simulate.coef}, {"seed", e.simulate.seed}}},
         {"prior_sd", e.prior_sd},
         {"proposal_scale", e.proposal_scale},
         {"oracle_samples", e.oracle_samples}};
  } else if (c.experiment == "ex3") {
    const auto& e = c.ex3;
    b = {{"data", e.data}, {"n", e.n}, {"horizon", e.horizon}, {"sum", e.sum}, {"prior_rate", e.prior_rate}};
  } else if (c.experiment == "ex4") {
    const auto& e = c.ex4;
    b = {{"data", e.data},
         {"preset", e.preset},
         {"simulation_seed", e.simulation_seed},
         {"require_major", e.require_major},
         {"susceptibles", e.susceptibles},
         {"shape_m1", e.shape_m1},
         {"shape_m2", optional_json(e.shape_m2)},
         {"delta", e.delta},
         {"infection_updates", optional_json(e.infection_updates)}};
  } else if (c.experiment == "ex5") {
    const auto& e = c.ex5;
    b = {{"data", e.data},
         {"horizon", e.horizon},
         {"population", e.population},
         {"mu", e.mu},
         {"theta", e.theta},
         {"prior_shape", e.prior_shape},
         {"prior_rate", e.prior_rate},
         {"moves_per_sweep", optional_json(e.moves_per_sweep)}};
  } else {
    b = {{"log_ratio", c.toy.log_ratio}};
  }
  j[block_key(c.experiment)] = b;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.is_object())
    if (auto it = j.find("experiment"); it != j.end() && it->is_string()) c = base_config(it->get<std::string>());
  Reader r(j, "config");
  r.get("experiment", c.experiment);
  r.get("dirichlet_p", c.dirichlet_p);
  r.get("collapse_allocation", c.collapse_allocation);
  r.get("output_dir", c.output_dir);
  r.object("balance", [&](Reader& b) {
    b.get("enabled", c.balance.enabled);
    b.get("pilot_iterations", c.balance.pilot_iterations);
    b.get("rounds", c.balance.rounds);
  });
  r.object("chain", [&](Reader& b) {
    b.get("iterations", c.chain.iterations);
    b.get("burnin", c.chain.burnin);
    b.get("thin", c.chain.thin);
    b.get("seed", c.chain.seed);
    b.get("replicates", c.chain.replicates);
  });
  r.object("ex1", [&](Reader& b) {
    auto& e = c.ex1;
    b.get("data", e.data);
    b.get("y_column", e.y_column);
    b.get("x_column", e.x_column);
    b.get("z_column", e.z_column);
    b.object("simulate", [&](Reader& s) {
      s.get("n", e.simulate.n);
      s.get("intercept", e.simulate.intercept);
      s.get("slope", e.simulate.slope);
      s.get("sd", e.simulate.sd);
      s.get("z_noise", e.simulate.z_noise);
      s.get("seed", e.simulate.seed);
    });
    b.get("mu0", e.mu0);
    b.get("v0", e.v0);
    b.get("a0", e.a0);
    b.get("b0", e.b0);
    b.get("oracle", e.oracle);
  });
  r.object("ex2", [&](Reader& b) {
    auto& e = c.ex2;
    b.get("data", e.data);
    b.get("response_column", e.response_column);
    b.get("covariate_columns", e.covariate_columns);
    b.get("model_columns", e.model_columns);
    b.object("simulate", [&](Reader& s) {
      s.get("n", e.simulate.n);
      s.get("coef", e.simulate.coef);
      s.get("seed", e.simulate.seed);
    });
    b.get("prior_sd", e.prior_sd);
    b.get("proposal_scale", e.proposal_scale);
    b.get("oracle_samples", e.oracle_samples);
  });
  r.object("ex3", [&](Reader& b) {
    b.get("data", c.ex3.data);
    b.get("n", c.ex3.n);
    b.get("horizon", c.ex3.horizon);
    b.get("sum", c.ex3.sum);
    b.get("prior_rate", c.ex3.prior_rate);
  });
  r.object("ex4", [&](Reader& b) {
    auto& e = c.ex4;
    b.get("data", e.data);
    b.get("preset", e.preset);
    b.get("simulation_seed", e.simulation_seed);
    b.get("require_major", e.require_major);
    b.get("susceptibles", e.susceptibles);
    b.get("shape_m1", e.shape_m1);
    b.get("shape_m2", e.shape_m2);
    b.get("delta", e.delta);
    b.get("infection_updates", e.infection_updates);
  });
  r.object("ex5", [&](Reader& b) {
    auto& e = c.ex5;
    b.get("data", e.data);
    b.get("horizon", e.horizon);
    b.get("population", e.population);
    b.get("mu", e.mu);
    b.get("theta", e.theta);
    b.get("prior_shape", e.prior_shape);
    b.get("prior_rate", e.prior_rate);
    b.get("moves_per_sweep", e.moves_per_sweep);
  });
  r.object("toy", [&](Reader& b) { b.get("log_ratio", c.toy.log_ratio); });
  r.finish();
  c.validate();
  resolve(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// --- experiments -----------------------------------------------------------------------

Experiment build_experiment(const ExperimentConfig& config) {
  config.validate();
  Experiment ex;
  const auto& kind = config.experiment;

  if (kind == "ex1") {
    const auto& e = config.ex1;
    std::shared_ptr<const models::RegressionData> data;
    if (e.data.empty()) {
      Rng rng(e.simulate.seed);
      data = std::make_shared<models::RegressionData>(models::simulate_regression_data(
          e.simulate.n, e.simulate.intercept, e.simulate.slope, e.simulate.sd, e.simulate.z_noise, rng));
    } else {
      data = std::make_shared<models::RegressionData>(
          models::RegressionData::from_csv(e.data, e.y_column, e.x_column, e.z_column));
    }
    models::RegressionPrior prior;
    prior.mu0 = Eigen::Vector2d(e.mu0[0], e.mu0[1]);
    prior.v0 = Eigen::Vector2d(e.v0[0], e.v0[1]).asDiagonal();
    prior.a0 = e.a0;
    prior.b0 = e.b0;
    prior.validate(2);
    ex.factory = [data, prior](const std::vector<double>& p) { return models::regression_spec(data, prior, p); };
    ex.description = "linear regression on x vs on z, conjugate priors (n=" + std::to_string(data->n()) + ")";
    if (e.oracle) {
      for (std::size_t i = 0; i < 2; ++i)
        ex.oracle_log_marginals.push_back(
            oracle::regression_marginal_quadrature(data->design(i), data->y, prior).log_value);
      ex.oracle_method = "quadrature over the variance";
    }
  } else if (kind == "ex2") {
    const auto& e = config.ex2;
    std::shared_ptr<const models::LogisticData> data;
    if (e.data.empty()) {
      Rng rng(e.simulate.seed);
      data = std::make_shared<models::LogisticData>(
          models::simulate_logistic_data(e.simulate.n, e.simulate.coef, e.model_columns, rng));
    } else {
      data = std::make_shared<models::LogisticData>(models::LogisticData::from_csv(
          e.data, e.response_column, e.covariate_columns, e.model_columns));
    }
    const double sd = e.prior_sd, scale = e.proposal_scale;
    ex.factory = [data, sd, scale](const std::vector<double>& p) {
      return models::logistic_spec(data, sd, scale, p);
    };
    ex.description = "nested logistic regressions with shared coefficients (n=" +
                     std::to_string(data->n()) + ")";
    if (e.oracle_samples > 0) {
      Rng rng = Rng(config.chain.seed).derive(0x0a11);
      for (std::size_t cols : e.model_columns)
        ex.oracle_log_marginals.push_back(
            oracle::logistic_marginal_is(*data, cols, sd, e.oracle_samples, rng).log_value);
      ex.oracle_method = "importance sampling from an inflated Laplace proposal";
    }
  } else if (kind == "ex3") {
    const auto& e = config.ex3;
    auto data = std::make_shared<models::EventData>(
        e.data.empty() ? models::EventData::from_summary(e.n, e.horizon, e.sum)
                       : models::EventData::from_csv(e.data, e.horizon));
    const double rate = e.prior_rate;
    ex.factory = [data, rate](const std::vector<double>& p) { return models::ex3_spec(data, rate, p); };
    ex.description = "Poisson process vs linear birth process (n=" + std::to_string(data->n()) +
                     ", T=" + fmt(data->horizon) + ", S=" + fmt(data->sum()) + ")";
    ex.oracle_log_marginals = {oracle::log_analytic_bf_ex3(data->n(), data->horizon, data->sum(), rate), 0.0};
    ex.oracle_method = "closed form";
  } else if (kind == "ex4") {
    const auto& e = config.ex4;
    const auto removal = ex4_removals(e);
    epidemic::Ex4Options opt;
    opt.susceptibles = e.susceptibles;
    opt.shape_m1 = e.shape_m1;
    opt.shape_m2 = e.shape_m2.value_or(epidemic::scenario(e.preset.at(0)).m2_shape);
    opt.delta = e.delta;
    opt.infection_updates = e.infection_updates;
    const bool collapse = config.collapse_allocation;
    ex.factory = [removal, opt, collapse](const std::vector<double>& p) {
      auto spec = epidemic::ex4_spec(removal, opt, p);
      spec.collapse_allocation = collapse;
      spec.validate();
      return spec;
    };
    ex.description = "SIR with Gamma(" + fmt(opt.shape_m1) + ") vs Gamma(" + fmt(opt.shape_m2) +
                     ") infectious periods (" + std::to_string(removal.size()) + " removals, N=" +
                     std::to_string(opt.susceptibles) + ")";
  } else if (kind == "ex5") {
    const auto& e = config.ex5;
    epidemic::Ex5Data data;
    if (e.data.empty()) {
      data = epidemic::gastro_data(e.horizon);
    } else {
      data.removal = removal_times(e.data, e.horizon);
      data.horizon = e.horizon;
    }
    data.population = e.population;
    data.validate();
    epidemic::Ex5Options opt;
    opt.missing_prior.mu = e.mu;
    opt.missing_prior.theta = e.theta;
    opt.prior_shape = e.prior_shape;
    opt.prior_rate = e.prior_rate;
    opt.moves_per_sweep = e.moves_per_sweep;
    const bool collapse = config.collapse_allocation;
    ex.factory = [data, opt, collapse](const std::vector<double>& p) {
      auto spec = epidemic::ex5_spec(data, opt, p);
      spec.collapse_allocation = collapse;
      spec.validate();
      return spec;
    };
    ex.description = "Poisson process vs SIR epidemic (" + std::to_string(data.n()) +
                     " removals, T=" + fmt(data.horizon) + ", N=" + std::to_string(data.population) + ")";
  } else {
    const double lr = config.toy.log_ratio;
    ex.factory = [lr](const std::vector<double>& p) { return models::toy_spec(lr, p); };
    ex.description = "two fixed densities with log ratio " + fmt(lr);
    ex.oracle_log_marginals = {lr, 0.0};
    ex.oracle_method = "fixed densities";
  }

  std::vector<double> p = config.dirichlet_p;
  if (p.empty()) p.assign(model_count(config), 1.0);
  for (const auto& c : ex.factory(p).components) ex.model_names.push_back(c->name());
  return ex;
}

// --- reports ---------------------------------------------------------------------------

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) {
    a.mean = a.sd = a.se = kNaN;
    return a;
  }
  double s = 0.0;
  for (double v : values) s += v;
  a.mean = s / static_cast<double>(a.count);
  if (a.count < 2) {
    a.sd = a.se = kNaN;
    return a;
  }
  double ss = 0.0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.sd = std::sqrt(ss / static_cast<double>(a.count - 1));
  a.se = a.sd / std::sqrt(static_cast<double>(a.count));
  return a;
}

bool ReplicateSummary::violation() const {
  for (bool b : bounds_violation)
    if (b) return true;
  if (!general) return true;
  const auto& g = *general;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!(g(i, j) > 0.0) || !std::isfinite(g(i, j))) return true;
  return false;
}

ReplicateSummary summarize_replicate(const mcmc::ChainOutput& out) {
  ReplicateSummary r;
  r.seed = out.seed;
  r.rao_blackwell = out.rao_blackwell.values;
  r.rb_se = out.rb_se;
  r.plain = out.plain.values;
  r.plain_se = out.plain_se;
  r.occupancy = out.occupancy;
  r.ess = out.ess;
  r.reliable = out.reliable;
  r.bounds_violation = out.bounds_violation;
  for (std::size_t t = 1; t < out.z_trace.size(); ++t)
    if (out.z_trace[t] != out.z_trace[t - 1]) ++r.switches;
  const auto est = mcmc::estimate_bayes_factors(out, 0);
  if (est.general) r.general = bfcore::bf_matrix(*est.general);
  if (est.dirichlet_fast) r.fast = bfcore::bf_matrix(*est.dirichlet_fast);
  r.occupancy_bf = est.occupancy;
  r.general_error = est.general_error;
  r.fast_error = est.fast_error;
  r.occupancy_error = est.occupancy_error;
  return r;
}

namespace {

Aggregate matrix_aggregate(const std::vector<ReplicateSummary>& reps,
                           std::optional<SquareMatrix<double>> ReplicateSummary::*field, std::size_t i,
                           std::size_t j) {
  std::vector<double> v;
  for (const auto& r : reps)
    if (const auto& m = r.*field) v.push_back((*m)(i, j));
  return aggregate(v);
}

}  // namespace

Aggregate SummaryReport::bf_general(std::size_t i, std::size_t j) const {
  return matrix_aggregate(replicates, &ReplicateSummary::general, i, j);
}
Aggregate SummaryReport::bf_fast(std::size_t i, std::size_t j) const {
  return matrix_aggregate(replicates, &ReplicateSummary::fast, i, j);
}
Aggregate SummaryReport::bf_occupancy(std::size_t i, std::size_t j) const {
  return matrix_aggregate(replicates, &ReplicateSummary::occupancy_bf, i, j);
}

Aggregate SummaryReport::rao_blackwell(std::size_t i) const {
  std::vector<double> v;
  for (const auto& r : replicates) v.push_back(r.rao_blackwell.at(i));
  return aggregate(v);
}

std::size_t SummaryReport::violations() const {
  return static_cast<std::size_t>(
      std::count_if(replicates.begin(), replicates.end(), [](const auto& r) { return r.violation(); }));
}

SummaryReport make_report(const ExperimentConfig& config, const Experiment& experiment,
                          const std::vector<mcmc::ChainOutput>& outputs, double wall_seconds) {
  SummaryReport rep;
  rep.experiment = config.experiment;
  rep.description = experiment.description;
  rep.model_names = experiment.model_names;
  rep.dirichlet_p = outputs.empty() ? config.dirichlet_p : outputs.front().dirichlet_p;
  rep.seed = config.chain.seed;
  rep.iterations = config.chain.iterations;
  rep.burnin = config.chain.burnin.value_or(config.chain.iterations / 10);
  rep.thin = config.chain.thin;
  for (const auto& o : outputs) rep.replicates.push_back(summarize_replicate(o));
  rep.oracle_log_marginals = experiment.oracle_log_marginals;
  rep.oracle_method = experiment.oracle_method;
  rep.wall_seconds = wall_seconds;
  return rep;
}

std::string format_human(const SummaryReport& rep) {
  std::ostringstream os;
  const std::size_t n = rep.models();
  os << "experiment  " << rep.experiment << ": " << rep.description << '\n';
  os << "models     ";
  for (std::size_t i = 0; i < n; ++i) os << ' ' << (i + 1) << '=' << rep.model_names[i];
  os << "\ndirichlet_p";
  for (double p : rep.dirichlet_p) os << ' ' << fmt(p);
  os << "\nseed " << rep.seed << "  iterations " << rep.iterations << "  burnin " << rep.burnin
     << "  thin " << rep.thin << "  replicates " << rep.replicates.size() << '\n';
  os << "wall time   " << fmt(rep.wall_seconds, 4) << " s\n\n";

  const bool multi = rep.replicates.size() > 1;
  os << "Bayes factors B_ij = m_i/m_j" << (multi ? " (mean and SE across replicates)" : "") << '\n';
  os << std::left << std::setw(8) << "pair" << std::setw(26) << "general" << std::setw(26) << "dirichlet"
     << std::setw(26) << "occupancy" << "oracle\n";
  auto cell = [&](const Aggregate& a) {
    std::string s = fmt(a.mean);
    if (multi && !std::isnan(a.se)) s += " +- " + fmt(a.se, 3);
    return s;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      os << std::setw(8) << ("B_" + std::to_string(i + 1) + std::to_string(j + 1))
         << std::setw(26) << cell(rep.bf_general(i, j)) << std::setw(26) << cell(rep.bf_fast(i, j))
         << std::setw(26) << cell(rep.bf_occupancy(i, j));
      if (!rep.oracle_log_marginals.empty())
        os << fmt(std::exp(rep.oracle_log_marginals[i] - rep.oracle_log_marginals[j]));
      else
        os << '-';
      os << '\n';
    }
  if (!rep.oracle_method.empty()) os << "oracle: " << rep.oracle_method << '\n';

  os << "\nposterior weights" << (multi ? " (replicate means)" : "") << '\n';
  os << std::setw(8) << "model" << std::setw(24) << "rao-blackwell" << std::setw(24) << "plain"
     << std::setw(12) << "occupancy" << std::setw(12) << "ess" << "flags\n";
  for (std::size_t i = 0; i < n; ++i) {
    double rb = 0, rbse = 0, pl = 0, plse = 0, occ = 0, ess = 0;
    bool unreliable = false, bounds = false;
    for (const auto& r : rep.replicates) {
      rb += r.rao_blackwell[i], rbse += r.rb_se[i], pl += r.plain[i], plse += r.plain_se[i];
      occ += static_cast<double>(r.occupancy[i]), ess += r.ess[i];
      unreliable |= !r.reliable[i];
      bounds |= r.bounds_violation[i];
    }
    const double k = static_cast<double>(std::max<std::size_t>(1, rep.replicates.size()));
    os << std::setw(8) << (i + 1) << std::setw(24) << (fmt(rb / k) + " (" + fmt(rbse / k, 2) + ")")
       << std::setw(24) << (fmt(pl / k) + " (" + fmt(plse / k, 2) + ")") << std::setw(12)
       << fmt(occ / k, 12) << std::setw(12) << fmt(std::round(ess / k), 12);
    std::vector<std::string> flags;
    if (bounds) flags.push_back("BOUNDS");
    if (unreliable) flags.push_back("low-ess");
    os << (flags.empty() ? "ok" : join(flags, ",")) << '\n';
  }

  for (std::size_t r = 0; r < rep.replicates.size(); ++r) {
    const auto& s = rep.replicates[r];
    if (!s.general_error.empty())
      os << "replicate " << (r + 1) << " general solver: " << s.general_error << '\n';
    if (!s.fast_error.empty()) os << "replicate " << (r + 1) << " dirichlet path: " << s.fast_error << '\n';
    if (!s.occupancy_error.empty())
      os << "replicate " << (r + 1) << " occupancy: " << s.occupancy_error << '\n';
  }
  std::uint64_t switches = 0;
  for (const auto& s : rep.replicates) switches += s.switches;
  os << "\nmodel switches " << switches << "  violations " << rep.violations() << " of "
     << rep.replicates.size() << '\n';
  return os.str();
}

std::string format_key_values(const SummaryReport& rep) {
  std::ostringstream os;
  const std::size_t n = rep.models();
  os << "experiment=" << rep.experiment << '\n';
  os << "description=" << rep.description << '\n';
  os << "models=" << n << '\n';
  for (std::size_t i = 0; i < n; ++i) os << "model." << (i + 1) << '=' << rep.model_names[i] << '\n';
  for (std::size_t i = 0; i < rep.dirichlet_p.size(); ++i)
    os << "dirichlet_p." << (i + 1) << '=' << fmt_full(rep.dirichlet_p[i]) << '\n';
  os << "seed=" << rep.seed << "\niterations=" << rep.iterations << "\nburnin=" << rep.burnin
     << "\nthin=" << rep.thin << "\nreplicates=" << rep.replicates.size()
     << "\nwall_seconds=" << fmt_full(rep.wall_seconds) << '\n';
  auto agg = [&](const std::string& key, const Aggregate& a) {
    os << key << ".mean=" << fmt_full(a.mean) << '\n'
       << key << ".sd=" << fmt_full(a.sd) << '\n'
       << key << ".se=" << fmt_full(a.se) << '\n'
       << key << ".count=" << a.count << '\n';
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const std::string ij = std::to_string(i + 1) + "." + std::to_string(j + 1);
      agg("bf_general." + ij, rep.bf_general(i, j));
      agg("bf_dirichlet." + ij, rep.bf_fast(i, j));
      agg("bf_occupancy." + ij, rep.bf_occupancy(i, j));
      if (!rep.oracle_log_marginals.empty())
        os << "bf_oracle." << ij << '='
           << fmt_full(std::exp(rep.oracle_log_marginals[i] - rep.oracle_log_marginals[j])) << '\n';
    }
  for (std::size_t i = 0; i < n; ++i) agg("rao_blackwell." + std::to_string(i + 1), rep.rao_blackwell(i));
  if (!rep.oracle_method.empty()) os << "oracle_method=" << rep.oracle_method << '\n';

  for (std::size_t r = 0; r < rep.replicates.size(); ++r) {
    const auto& s = rep.replicates[r];
    const std::string pre = "replicate." + std::to_string(r + 1) + ".";
    os << pre << "seed=" << s.seed << '\n';
    for (std::size_t i = 0; i < n; ++i) {
      const std::string k = std::to_string(i + 1);
      os << pre << "rao_blackwell." << k << '=' << fmt_full(s.rao_blackwell[i]) << '\n'
         << pre << "rao_blackwell_se." << k << '=' << fmt_full(s.rb_se[i]) << '\n'
         << pre << "plain." << k << '=' << fmt_full(s.plain[i]) << '\n'
         << pre << "plain_se." << k << '=' << fmt_full(s.plain_se[i]) << '\n'
         << pre << "occupancy." << k << '=' << s.occupancy[i] << '\n'
         << pre << "ess." << k << '=' << fmt_full(s.ess[i]) << '\n'
         << pre << "reliable." << k << '=' << (s.reliable[i] ? 1 : 0) << '\n'
         << pre << "bounds_violation." << k << '=' << (s.bounds_violation[i] ? 1 : 0) << '\n';
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const std::string ij = std::to_string(i + 1) + "." + std::to_string(j + 1);
        if (s.general) os << pre << "bf_general." << ij << '=' << fmt_full((*s.general)(i, j)) << '\n';
        if (s.fast) os << pre << "bf_dirichlet." << ij << '=' << fmt_full((*s.fast)(i, j)) << '\n';
        if (s.occupancy_bf)
          os << pre << "bf_occupancy." << ij << '=' << fmt_full((*s.occupancy_bf)(i, j)) << '\n';
      }
    if (!s.general_error.empty()) os << pre << "general_error=" << s.general_error << '\n';
    if (!s.fast_error.empty()) os << pre << "dirichlet_error=" << s.fast_error << '\n';
    if (!s.occupancy_error.empty()) os << pre << "occupancy_error=" << s.occupancy_error << '\n';
    os << pre << "switches=" << s.switches << '\n';
    os << pre << "violation=" << (s.violation() ? 1 : 0) << '\n';
  }
  os << "violations=" << rep.violations() << '\n';
  return os.str();
}

int strict_exit_code(const SummaryReport& report, bool strict) {
  return strict && report.violations() > 0 ? kExitStrict : kExitOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const json::exception*>(&e))
    return kExitConfig;
  if (dynamic_cast<const SingularSystem*>(&e) || dynamic_cast<const BoundsViolation*>(&e))
    return kExitStrict;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DegenerateOccupancy*>(&e) ||
      dynamic_cast<const InfeasibleState*>(&e))
    return kExitNumerical;
  return kExitFailure;
}

// --- simulation --------------------------------------------------------------------------

std::vector<SimulatedFile> simulate(const SimulateOptions& o) {
  if (o.replicates < 1) throw ConfigError("replicates must be at least 1");
  if (o.model != "sir" && o.model != "poisson") throw ConfigError("model must be sir or poisson");
  epidemic::SirParams sir;
  if (o.model == "sir") {
    if (!o.preset.empty()) {
      if (o.preset.size() != 1) throw ConfigError("preset must be A, B or C");
      sir = epidemic::scenario(o.preset[0]).truth;
    } else {
      sir.beta = o.beta;
      sir.period_shape = o.period_shape;
      sir.period_rate = o.period_rate;
      sir.mass_action = o.mass_action;
    }
    sir.susceptibles = o.susceptibles;
    if (!positive(sir.beta) || !positive(sir.period_shape) || !positive(sir.period_rate) || sir.susceptibles < 1)
      throw ConfigError("SIR parameters must be positive");
  } else if (!(o.lambda >= 0.0) || !positive(o.horizon)) {
    throw ConfigError("poisson needs lambda >= 0 and T > 0");
  }

  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create " + o.out.string() + ": " + ec.message());

  std::vector<SimulatedFile> files;
  json manifest;
  manifest["model"] = o.model;
  manifest["seed"] = o.seed;
  if (o.model == "sir") {
    manifest["preset"] = o.preset;
    manifest["susceptibles"] = sir.susceptibles;
    manifest["beta"] = sir.beta;
    manifest["period_shape"] = sir.period_shape;
    manifest["period_rate"] = sir.period_rate;
    manifest["mass_action"] = sir.mass_action;
    manifest["major_only"] = o.major_only;
  } else {
    manifest["lambda"] = o.lambda;
    manifest["horizon"] = o.horizon;
  }
  manifest["files"] = json::array();

  const bool many = o.replicates > 1;
  for (std::size_t r = 0; r < o.replicates; ++r) {
    SimulatedFile f;
    f.seed = many ? Rng::replica_seed(o.seed, r) : o.seed;
    Rng rng(f.seed);
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, many ? "_r%03zu" : "", r + 1);
    std::ostringstream data;
    data << std::setprecision(17);
    if (o.model == "sir") {
      epidemic::SirOutcome outcome;
      int attempt = 0;
      do {
        outcome = epidemic::simulate_sir(sir, rng);
      } while (o.major_only && !epidemic::is_major(outcome, sir.susceptibles) && ++attempt < 10000);
      if (o.major_only && !epidemic::is_major(outcome, sir.susceptibles))
        throw NumericalError("no major epidemic in 10000 simulations");
      f.major = epidemic::is_major(outcome, sir.susceptibles);
      const auto removals = outcome.sorted_removals();
      f.count = removals.size();
      data << "time\n";
      for (double t : removals) data << t << '\n';
      std::ostringstream ev;
      ev << std::setprecision(17) << "time,type\n";
      for (const auto& e : outcome.events)
        ev << e.time << ',' << (e.type == epidemic::EventType::infection ? 1 : -1) << '\n';
      f.path = o.out / ("removals" + std::string(suffix) + ".csv");
      f.events = o.out / ("events" + std::string(suffix) + ".csv");
      csv::write_atomic(f.events, ev.str());
    } else {
      const auto d = epidemic::simulate_poisson(o.lambda, o.horizon, rng);
      f.count = d.n();
      data << "time\n";
      for (double t : d.times) data << t << '\n';
      f.path = o.out / ("events" + std::string(suffix) + ".csv");
    }
    csv::write_atomic(f.path, data.str());
    json entry = {{"path", f.path.filename().string()}, {"seed", f.seed}, {"count", f.count}};
    if (o.model == "sir") {
      entry["events"] = f.events.filename().string();
      entry["major"] = f.major;
    }
    manifest["files"].push_back(entry);
    files.push_back(std::move(f));
  }
  if (many) csv::write_atomic(o.out / "manifest.json", manifest.dump(2) + "\n");
  return files;
}

// --- fit ---------------------------------------------------------------------------------

SummaryReport fit(const ExperimentConfig& input, const FitOptions& options) {
  ExperimentConfig config = input;
  config.validate();
  resolve(config);
  const auto start = std::chrono::steady_clock::now();
  const Experiment ex = build_experiment(config);
  const std::size_t n = model_count(config);

  std::vector<double> p = config.dirichlet_p;
  if (config.balance.enabled) {
    std::size_t round = 0;
    auto pilot = [&](const std::vector<double>& q) {
      mcmc::ChainConfig cc;
      cc.iterations = config.balance.pilot_iterations;
      cc.seed = Rng(config.chain.seed).derive(0xba1a0000u + round++).seed();
      cc.record_theta = false;
      return mcmc::run_chain(ex.factory(q), cc);
    };
    p = mcmc::balance_dirichlet(pilot, n, config.balance.rounds);
  }

  mcmc::ChainConfig cc;
  cc.iterations = config.chain.iterations;
  cc.burnin = config.chain.burnin;
  cc.thin = config.chain.thin;
  cc.seed = config.chain.seed;
  cc.record_theta = options.write_files && options.write_traces;
  auto outputs = mcmc::run_replicates(ex.factory, p, cc, config.chain.replicates, options.threads);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  auto report = make_report(config, ex, outputs, wall);

  if (options.write_files) {
    const std::filesystem::path dir = config.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    csv::write_atomic(dir / "config.json", to_json(config).dump(2) + "\n");
    csv::write_atomic(dir / "summary.txt", format_human(report));
    csv::write_atomic(dir / "summary.kv", format_key_values(report));
    if (options.write_traces)
      for (std::size_t r = 0; r < outputs.size(); ++r) {
        std::ostringstream os;
        mcmc::write_trace_csv(os, outputs[r]);
        char name[32];
        std::snprintf(name, sizeof name, "trace_r%03zu.csv", r + 1);
        csv::write_atomic(dir / name, os.str());
      }
  }
  return report;
}

}  // namespace mixbf::cli
