#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mixbf/cli.hpp"
#include "mixbf/csv.hpp"
#include "mixbf/error.hpp"

using namespace mixbf;
using namespace mixbf::cli;
using nlohmann::json;

namespace {

const char* kKinds[] = {"ex1", "ex2", "ex3", "ex4", "ex5", "toy-ratio"};

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mixbf_test_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return exit_code_for(e);
  }
  return kExitOk;
}

// Two-model chain output whose estimates sit wherever the caller puts them.
mcmc::ChainOutput fake_output(double rb1) {
  mcmc::ChainOutput out;
  out.model_names = {"a", "b"};
  out.dirichlet_p = {1.0, 1.0};
  out.seed = 9;
  out.iterations = 4;
  out.retained = 4;
  out.occupancy = {2, 2};
  out.z_trace = {0, 1, 0, 1};
  out.alpha_trace = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  out.rao_blackwell.values = {rb1, 1.0 - rb1};
  out.plain.values = {rb1, 1.0 - rb1};
  out.rb_se = out.plain_se = {0.01, 0.01};
  out.ess = {4.0, 4.0};
  out.reliable = {true, true};
  const auto outside = [](double v) { return v < 1.0 / 3.0 || v > 2.0 / 3.0; };
  out.bounds_violation = {outside(rb1), outside(1.0 - rb1)};
  return out;
}

}  // namespace

TEST_CASE("config round trip is idempotent for every experiment") {
  for (const char* kind : kKinds) {
    CAPTURE(kind);
    const auto c = default_config(kind);
    const json once = to_json(c);
    const json twice = to_json(config_from_json(once));
    CHECK(once == twice);
    CHECK(to_json(config_from_json(json::parse(once.dump()))) == once);
  }
}

TEST_CASE("config round trip keeps non-default values") {
  auto c = default_config("ex4");
  c.chain.iterations = 777;
  c.chain.burnin = 7;
  c.chain.thin = 3;
  c.ex4.preset = "C";
  c.ex4.shape_m2 = 2.5;
  c.ex4.infection_updates = 11;
  c.dirichlet_p = {2.0, 3.0};
  const auto back = config_from_json(to_json(c));
  CHECK(back.chain.iterations == 777);
  CHECK(*back.chain.burnin == 7);
  CHECK(back.chain.thin == 3);
  CHECK(back.ex4.preset == "C");
  CHECK(*back.ex4.shape_m2 == 2.5);
  CHECK(*back.ex4.infection_updates == 11);
  CHECK(back.dirichlet_p == std::vector<double>{2.0, 3.0});
}

TEST_CASE("partial configs take per-experiment defaults") {
  const auto c = config_from_json(json::parse(R"({"experiment": "ex5", "chain": {"iterations": 500}})"));
  CHECK(c.collapse_allocation);
  CHECK(c.balance.enabled);
  CHECK(*c.chain.burnin == 50);
  CHECK(c.dirichlet_p == std::vector<double>{1.0, 1.0});
  const auto t = config_from_json(json::parse(R"({"experiment": "toy-ratio"})"));
  CHECK(t.dirichlet_p == std::vector<double>{1.0, 50.0});
  const auto e4 = config_from_json(json::parse(R"({"experiment": "ex4", "ex4": {"preset": "A"}})"));
  CHECK(*e4.ex4.shape_m2 == 5.0);
}

TEST_CASE("config errors map to exit code 2") {
  const char* bad[] = {
      R"({"experiment": "ex3", "bogus": 1})",
      R"({"experiment": "ex3", "chain": {"iterations": 10, "typo": 1}})",
      R"({"experiment": "ex3", "chain": {"iterations": -5}})",
      R"({"experiment": "ex3", "chain": {"iterations": 2.5}})",
      R"({"experiment": "ex3", "chain": {"iterations": 100, "burnin": 100}})",
      R"({"experiment": "ex3", "chain": {"thin": 0}})",
      R"({"experiment": "ex3", "chain": {"replicates": 0}})",
      R"({"experiment": "ex3", "dirichlet_p": [1, 0]})",
      R"({"experiment": "ex3", "dirichlet_p": [1, 1, 1]})",
      R"({"experiment": "ex3", "ex3": {"sum": 100}})",
      R"({"experiment": "ex3", "collapse_allocation": true})",
      R"({"experiment": "ex4", "ex4": {"preset": "D"}})",
      R"({"experiment": "ex5", "ex5": {"theta": 1.5}})",
      R"({"experiment": "ex2", "ex2": {"model_columns": [2, 1]}})",
      R"({"experiment": "ex9"})",
      R"({"experiment": 3})",
      R"([1, 2])",
  };
  for (const char* text : bad) {
    CAPTURE(text);
    CHECK_THROWS_AS(config_from_json(json::parse(text)), ConfigError);
    CHECK(exit_code_of([&] { config_from_json(json::parse(text)); }) == kExitConfig);
  }
}

TEST_CASE("load_config reports unreadable and malformed files") {
  const auto dir = scratch_dir("load");
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  std::ofstream(dir / "ok.json") << R"({"experiment": "ex3", "chain": {"seed": 4}})";
  CHECK(load_config(dir / "ok.json").chain.seed == 4);
  std::filesystem::remove_all(dir);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(InvalidArgument("x")) == kExitConfig);
  CHECK(exit_code_for(NumericalError("x")) == kExitNumerical);
  CHECK(exit_code_for(InfeasibleState("x")) == kExitNumerical);
  CHECK(exit_code_for(DegenerateOccupancy("x")) == kExitNumerical);
  CHECK(exit_code_for(SingularSystem("x", 0)) == kExitStrict);
  CHECK(exit_code_for(BoundsViolation("x")) == kExitStrict);
  CHECK(exit_code_for(IoError("x")) == kExitFailure);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitFailure);
}

TEST_CASE("aggregate standard error is the sample sd over sqrt(R)") {
  const auto a = aggregate({1.0, 2.0, 3.0, 4.0});
  CHECK(a.count == 4);
  CHECK(a.mean == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(std::abs(a.sd - std::sqrt(5.0 / 3.0)) < 1e-15);
  CHECK(std::abs(a.se - std::sqrt(5.0 / 3.0) / 2.0) < 1e-15);

  std::mt19937_64 gen(3);
  std::lognormal_distribution<double> d(0.0, 1.5);
  for (std::size_t r : {2u, 5u, 20u, 100u}) {
    std::vector<double> v(r);
    for (auto& x : v) x = d(gen);
    long double mean = 0, ss = 0;
    for (double x : v) mean += x;
    mean /= r;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double want = static_cast<double>(std::sqrt(ss / (r - 1)) / std::sqrt(static_cast<long double>(r)));
    CHECK(std::abs(aggregate(v).se - want) <= 1e-12 * std::max(1.0, want));
  }
  CHECK(std::isnan(aggregate({2.0}).se));
  CHECK(aggregate({2.0}).mean == 2.0);
  CHECK(std::isnan(aggregate({}).mean));
}

TEST_CASE("strict mode fails on a corrupted estimate and passes a clean one") {
  const auto clean = summarize_replicate(fake_output(0.5));
  CHECK_FALSE(clean.violation());
  REQUIRE(clean.general);
  CHECK((*clean.general)(0, 1) == doctest::Approx(1.0));

  SummaryReport rep;
  rep.model_names = {"a", "b"};
  rep.replicates = {clean};
  CHECK(strict_exit_code(rep, true) == kExitOk);

  const auto bad = summarize_replicate(fake_output(0.9));
  CHECK(bad.violation());
  rep.replicates.push_back(bad);
  CHECK(rep.violations() == 1);
  CHECK(strict_exit_code(rep, true) == kExitStrict);
  CHECK(strict_exit_code(rep, false) == kExitOk);
  CHECK(format_key_values(rep).find("violations=1") != std::string::npos);
}

TEST_CASE("oracle values for the Poisson and birth-process example") {
  auto c = default_config("ex3");
  auto lb = build_experiment(c).oracle_log_marginals;
  CHECK(std::exp(lb[0] - lb[1]) == doctest::Approx(1.148).epsilon(5e-4));
  c.ex3.prior_rate = 0.01;
  lb = build_experiment(c).oracle_log_marginals;
  CHECK(std::exp(lb[0] - lb[1]) == doctest::Approx(1.587).epsilon(5e-4));
  c.ex3 = {"", 0, 1.0, 0.0, 1.0};
  lb = build_experiment(c).oracle_log_marginals;
  CHECK(std::exp(lb[0] - lb[1]) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("fit on the toy ratio recovers the fixed Bayes factor deterministically") {
  auto c = default_config("toy-ratio");
  c.chain.iterations = 200000;
  c.chain.burnin = 1000;
  FitOptions opt;
  opt.write_files = false;
  const auto a = fit(c, opt);
  const auto b = fit(c, opt);
  const double bf = a.bf_general(0, 1).mean;
  CHECK(bf == doctest::Approx(50.0).epsilon(0.06));
  CHECK(a.bf_fast(0, 1).mean == doctest::Approx(bf).epsilon(1e-8));
  CHECK(a.replicates[0].rao_blackwell == b.replicates[0].rao_blackwell);
  CHECK(a.replicates[0].occupancy == b.replicates[0].occupancy);
  CHECK(a.violations() == 0);
  CHECK(strict_exit_code(a, true) == kExitOk);
}

TEST_CASE("replicate aggregation in the report matches per-replicate values") {
  auto c = default_config("ex3");
  c.chain.iterations = 20000;
  c.chain.burnin = 1000;
  c.chain.replicates = 5;
  FitOptions opt;
  opt.write_files = false;
  opt.threads = 3;
  const auto rep = fit(c, opt);
  REQUIRE(rep.replicates.size() == 5);
  std::vector<double> v;
  for (const auto& r : rep.replicates) v.push_back((*r.general)(0, 1));
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 5.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / 4.0) / std::sqrt(5.0);
  CHECK(std::abs(rep.bf_general(0, 1).se - se) < 1e-12);
  CHECK(std::abs(rep.bf_general(0, 1).mean - mean) < 1e-12);
  // Replicate seeds are distinct, so the estimates differ.
  CHECK(v[0] != v[1]);
}

TEST_CASE("fit writes config, summaries and traces") {
  const auto dir = scratch_dir("fit");
  auto c = default_config("ex3");
  c.chain.iterations = 2000;
  c.chain.burnin = 200;
  c.chain.replicates = 2;
  c.output_dir = dir.string();
  const auto rep = fit(c, FitOptions{});
  for (const char* f : {"config.json", "summary.txt", "summary.kv", "trace_r001.csv", "trace_r002.csv"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(to_json(load_config(dir / "config.json")) == to_json(c));
  const auto trace = csv::read(dir / "trace_r001.csv");
  CHECK(trace.rows.size() == 1800);
  CHECK(trace.header.front() == "iter");
  const auto kv = slurp(dir / "summary.kv");
  CHECK(kv.find("bf_general.1.2.mean=") != std::string::npos);
  CHECK(kv.find("replicate.2.seed=") != std::string::npos);
  CHECK(slurp(dir / "summary.txt") == format_human(rep));
  std::filesystem::remove_all(dir);
}

TEST_CASE("simulate writes datasets, events and a manifest") {
  const auto dir = scratch_dir("sim");
  SimulateOptions o;
  o.preset = "B";
  o.replicates = 3;
  o.seed = 5;
  o.out = dir;
  const auto files = simulate(o);
  REQUIRE(files.size() == 3);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["files"].size() == 3);
  CHECK(manifest["beta"] == 1.0);
  CHECK(manifest["period_rate"] == 0.75);
  for (const auto& f : files) {
    const auto t = csv::read(f.path).values("time");
    CHECK(t.size() == f.count);
    CHECK(std::is_sorted(t.begin(), t.end()));
    const auto ev = csv::read(f.events);
    // Every individual is infected once (the initial infective at time 0) and removed once.
    CHECK(ev.rows.size() == 2 * f.count - 1);
  }
  CHECK(files[0].seed == 5);
  CHECK(files[1].seed != files[0].seed);

  SimulateOptions p;
  p.model = "poisson";
  p.lambda = 2.0;
  p.horizon = 10.0;
  p.seed = 3;
  p.out = dir / "pois";
  const auto one = simulate(p);
  REQUIRE(one.size() == 1);
  CHECK_FALSE(std::filesystem::exists(p.out / "manifest.json"));
  for (double t : csv::read(one[0].path).values("time")) CHECK((t >= 0.0 && t <= 10.0));

  p.model = "sis";
  CHECK_THROWS_AS(simulate(p), ConfigError);
  std::filesystem::remove_all(dir);
}
