#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>

#include "mixbf/bfcore.hpp"
#include "mixbf/cli.hpp"
#include "mixbf/epidemic.hpp"
#include "mixbf/error.hpp"
#include "mixbf/oracle.hpp"

namespace py = pybind11;
using namespace mixbf;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_rows(const SquareMatrix<double>& m) {
  Matrix out(m.size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out[i][j] = m(i, j);
  return out;
}

bfcore::PriorMoments moments_from(const std::vector<double>& first, const Matrix& second) {
  bfcore::PriorMoments m;
  m.first = first;
  m.second = SquareMatrix<double>(first.size());
  if (second.size() != first.size()) throw InvalidArgument("second-moment matrix has the wrong size");
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (second[i].size() != first.size()) throw InvalidArgument("second-moment matrix is not square");
    for (std::size_t j = 0; j < first.size(); ++j) m.second(i, j) = second[i][j];
  }
  return m;
}

py::dict report_dict(const cli::SummaryReport& rep) {
  const std::size_t n = rep.models();
  auto matrix = [&](auto getter) {
    Matrix mean(n, std::vector<double>(n)), se(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const cli::Aggregate a = getter(i, j);
        mean[i][j] = a.mean;
        se[i][j] = a.se;
      }
    return std::pair{mean, se};
  };
  py::dict d;
  d["experiment"] = rep.experiment;
  d["description"] = rep.description;
  d["models"] = rep.model_names;
  d["dirichlet_p"] = rep.dirichlet_p;
  d["seed"] = rep.seed;
  d["iterations"] = rep.iterations;
  d["burnin"] = rep.burnin;
  const auto [g, gse] = matrix([&](auto i, auto j) { return rep.bf_general(i, j); });
  const auto [fm, fse] = matrix([&](auto i, auto j) { return rep.bf_fast(i, j); });
  const auto [om, ose] = matrix([&](auto i, auto j) { return rep.bf_occupancy(i, j); });
  d["bf_general"] = g;
  d["bf_general_se"] = gse;
  d["bf_dirichlet"] = fm;
  d["bf_occupancy"] = om;
  if (!rep.oracle_log_marginals.empty()) {
    Matrix o(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        o[i][j] = std::exp(rep.oracle_log_marginals[i] - rep.oracle_log_marginals[j]);
    d["bf_oracle"] = o;
    d["oracle_method"] = rep.oracle_method;
  }
  py::list reps;
  for (const auto& r : rep.replicates) {
    py::dict x;
    x["seed"] = r.seed;
    x["rao_blackwell"] = r.rao_blackwell;
    x["rao_blackwell_se"] = r.rb_se;
    x["plain"] = r.plain;
    x["occupancy"] = r.occupancy;
    x["ess"] = r.ess;
    x["switches"] = r.switches;
    x["violation"] = r.violation();
    if (r.general) x["bf_general"] = to_rows(*r.general);
    reps.append(x);
  }
  d["replicates"] = reps;
  d["violations"] = rep.violations();
  d["wall_seconds"] = rep.wall_seconds;
  d["summary"] = cli::format_human(rep);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bayes factors from mixture hypermodels";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<BoundsViolation>(m, "BoundsViolation", PyExc_ArithmeticError);
  py::register_exception<SingularSystem>(m, "SingularSystem", PyExc_ArithmeticError);

  m.def("dirichlet_moments", [](const std::vector<double>& p) {
    const auto mo = bfcore::dirichlet_moments(p);
    return std::pair{mo.first, to_rows(mo.second)};
  }, py::arg("p"), "First and second moments of a Dirichlet(p) weight vector.");

  m.def("forward_posterior_means", [](const std::vector<double>& p, const std::vector<double>& marginals) {
    return bfcore::forward_posterior_means(bfcore::dirichlet_moments(p), marginals).values;
  }, py::arg("p"), py::arg("marginals"), "E[a_i | x] under a Dirichlet(p) prior for given marginal likelihoods.");

  m.def("bayes_factors", [](const std::vector<double>& posterior_means, const std::vector<double>& p,
                            std::size_t reference) {
    const auto mo = bfcore::dirichlet_moments(p);
    return bfcore::solve_general(bfcore::build_A(mo, bfcore::PosteriorMeans{posterior_means}), reference).values;
  }, py::arg("posterior_means"), py::arg("p"), py::arg("reference") = 0,
        "B_{j,reference} from posterior weight means under a Dirichlet(p) prior.");

  m.def("bayes_factors_from_moments", [](const std::vector<double>& posterior_means,
                                         const std::vector<double>& first, const Matrix& second,
                                         std::size_t reference) {
    const auto mo = moments_from(first, second);
    bfcore::validate(mo);
    return bfcore::solve_general(bfcore::build_A(mo, bfcore::PosteriorMeans{posterior_means}), reference).values;
  }, py::arg("posterior_means"), py::arg("first"), py::arg("second"), py::arg("reference") = 0);

  m.def("two_model_bf", [](const std::vector<double>& p, double e1) {
    const auto r = bfcore::two_model_bf(bfcore::dirichlet_moments(p), e1);
    return r.value;
  }, py::arg("p"), py::arg("e1"));

  m.def("analytic_bf_ex3", &oracle::analytic_bf_ex3, py::arg("n"), py::arg("horizon"), py::arg("sum"),
        py::arg("theta"));

  m.def("integrals", [](const std::vector<double>& infection, const std::vector<double>& removal,
                        std::size_t susceptibles, double t0, double t1) {
    epidemic::Trajectory t;
    t.s0 = static_cast<long>(susceptibles);
    t.i0 = 1;
    for (double x : infection) t.events.push_back({x, epidemic::EventType::infection});
    for (double x : removal) t.events.push_back({x, epidemic::EventType::removal});
    t.sort_events();
    t.validate();
    const auto r = epidemic::integrals(t, t0, t1);
    return std::pair{r.si, r.i};
  }, py::arg("infection"), py::arg("removal"), py::arg("susceptibles"), py::arg("t0"), py::arg("t1"),
        "Integrals of S(t)I(t) and I(t) with one initial infective at time 0; infection lists the later ones.");

  m.def("simulate_sir", [](std::size_t susceptibles, double beta, double shape, double rate, std::uint64_t seed,
                           bool mass_action) {
    epidemic::SirParams p;
    p.susceptibles = susceptibles;
    p.beta = beta;
    p.period_shape = shape;
    p.period_rate = rate;
    p.mass_action = mass_action;
    Rng rng(seed);
    const auto o = epidemic::simulate_sir(p, rng);
    py::dict d;
    d["infection"] = o.infection;
    d["removal"] = o.removal;
    d["final_size"] = o.final_size();
    d["major"] = epidemic::is_major(o, susceptibles);
    return d;
  }, py::arg("susceptibles"), py::arg("beta"), py::arg("shape"), py::arg("rate"), py::arg("seed") = 1,
        py::arg("mass_action") = false);

  m.def("default_config", [](const std::string& kind) { return cli::to_json(cli::default_config(kind)).dump(); },
        py::arg("experiment"), "Default config for an experiment kind, as JSON text.");

  m.def("normalize_config", [](const std::string& text) {
    return cli::to_json(cli::config_from_json(nlohmann::json::parse(text))).dump();
  }, py::arg("config"));

  m.def("fit_json", [](const std::string& text, std::size_t threads, bool write_files) {
    const auto config = cli::config_from_json(nlohmann::json::parse(text));
    cli::FitOptions opt;
    opt.threads = threads;
    opt.write_files = write_files;
    cli::SummaryReport rep;
    {
      py::gil_scoped_release release;
      rep = cli::fit(config, opt);
    }
    return report_dict(rep);
  }, py::arg("config"), py::arg("threads") = 1, py::arg("write_files") = false);
}
