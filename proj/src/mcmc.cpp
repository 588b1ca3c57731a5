#include "mixbf/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "mixbf/error.hpp"

namespace mixbf::mcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

void MixtureSpec::validate() const {
  const std::size_t n = components.size();
  if (n < 2) throw InvalidArgument("a mixture needs at least two models");
  if (dirichlet_p.size() != n) throw InvalidArgument("dirichlet_p length differs from model count");
  for (double p : dirichlet_p)
    if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("dirichlet_p entries must be positive");
  if (initial_model >= n) throw InvalidArgument("initial model out of range");
  for (std::size_t i = 0; i < n; ++i) {
    if (!components[i]) throw InvalidArgument("null model component");
    for (std::size_t s : components[i]->slots())
      if (s >= slots.size())
        throw InvalidArgument("component " + components[i]->name() + " reads an undeclared slot");
  }
  for (const auto& s : slots)
    if (s.owner >= n) throw InvalidArgument("slot '" + s.name + "' has no valid owner");
  if (collapse_allocation)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s : components[i]->slots())
        if (slots[s].owner != i)
          throw InvalidArgument("collapsed allocation needs unshared parameters; model " +
                                components[i]->name() + " reads '" + slots[s].name + "'");
}

void ChainConfig::validate() const {
  if (iterations == 0) throw InvalidArgument("iterations must be positive");
  if (effective_burnin() >= iterations) throw InvalidArgument("burnin must be below iterations");
  if (thin == 0) throw InvalidArgument("thin must be at least 1");
}

std::vector<double> ChainOutput::occupancy_fraction() const {
  std::vector<double> f(occupancy.size(), 0.0);
  if (retained == 0) return f;
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = static_cast<double>(occupancy[i]) / static_cast<double>(retained);
  return f;
}

std::vector<double> update_alpha(std::size_t current, std::span<const double> p, Rng& rng) {
  std::vector<double> shape(p.begin(), p.end());
  shape.at(current) += 1.0;
  auto alpha = rng.dirichlet(shape);
  // Guard against a zero weight from gamma underflow with tiny shapes.
  for (auto& a : alpha) a = std::max(a, std::numeric_limits<double>::min());
  return alpha;
}

std::vector<double> allocation_probabilities(std::span<const double> alpha,
                                             std::span<const double> log_density) {
  const std::size_t n = alpha.size();
  if (log_density.size() != n) throw InvalidArgument("log-density vector has wrong length");
  std::vector<double> lw(n);
  double mx = kNegInf;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(log_density[i]) || log_density[i] == HUGE_VAL)
      throw NumericalError("log-density of model " + std::to_string(i + 1) + " is not finite");
    lw[i] = (alpha[i] > 0.0 && log_density[i] > kNegInf) ? std::log(alpha[i]) + log_density[i]
                                                         : kNegInf;
    mx = std::max(mx, lw[i]);
  }
  if (mx == kNegInf) throw InfeasibleState("every model has zero density at the current state");
  double total = 0.0;
  for (auto& v : lw) total += (v = (v == kNegInf) ? 0.0 : std::exp(v - mx));
  for (auto& v : lw) v /= total;
  return lw;
}

std::size_t update_z(std::span<const double> alpha, std::span<const double> log_density, Rng& rng) {
  const auto q = allocation_probabilities(alpha, log_density);
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    last = i;
    acc += q[i];
    if (u < acc) return i;
  }
  return last;
}

Chain::Chain(MixtureSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed) {
  spec_.validate();
  const std::size_t n = spec_.size();
  const std::size_t d = spec_.slots.size();
  refresh_.assign(n, std::vector<std::vector<std::size_t>>(n));
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<bool> used(d, false);
    for (std::size_t s : spec_.components[c]->slots()) used[s] = true;
    for (std::size_t s = 0; s < d; ++s)
      if (!used[s]) refresh_[c][spec_.slots[s].owner].push_back(s);
  }

  state_.theta.resize(d);
  for (std::size_t s = 0; s < d; ++s)
    state_.theta[s] = spec_.components[spec_.slots[s].owner]->initial_value(s, rng_);
  if (spec_.missing) spec_.missing->initialize(state_.theta, rng_);
  state_.current = spec_.initial_model;
  double p0 = 0.0;
  for (double p : spec_.dirichlet_p) p0 += p;
  state_.alpha.resize(n);
  for (std::size_t i = 0; i < n; ++i) state_.alpha[i] = spec_.dirichlet_p[i] / p0;
  logdens_.resize(n);

  const double l0 = component_log_density(state_.current);
  if (!std::isfinite(l0))
    throw InfeasibleState("initial state has non-finite density under model " +
                          spec_.components[state_.current]->name());
}

double Chain::component_log_density(std::size_t i) const {
  const auto& c = *spec_.components[i];
  const double la = c.log_augmented_density(state_.theta);
  if (la == kNegInf) return kNegInf;
  const double lm = c.log_missing_prior(state_.theta);
  return la + lm;
}

void Chain::sweep() {
  const std::size_t n = spec_.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (spec_.collapse_allocation) {
      const auto v = spec_.components[i]->log_collapsed_density();
      if (!v) throw InvalidArgument("model " + spec_.components[i]->name() + " has no collapsed density");
      logdens_[i] = *v;
    } else {
      logdens_[i] = component_log_density(i);
    }
    if (std::isnan(logdens_[i]) || logdens_[i] == HUGE_VAL)
      throw NumericalError("log-density overflow at iteration " +
                           std::to_string(state_.iteration) + " in model " +
                           spec_.components[i]->name());
  }
  state_.current = update_z(state_.alpha, logdens_, rng_);
  state_.alpha = update_alpha(state_.current, spec_.dirichlet_p, rng_);

  spec_.components[state_.current]->update_params_current(state_.theta, rng_);
  const auto& refresh = refresh_[state_.current];
  for (std::size_t j = 0; j < n; ++j)
    if (!refresh[j].empty()) spec_.components[j]->sample_prior_block(state_.theta, refresh[j], rng_);

  if (spec_.missing) spec_.missing->update(state_.current, state_.theta, rng_);
  ++state_.iteration;
}

void Chain::check_invariants() const {
  double total = 0.0;
  for (double a : state_.alpha) {
    if (!(a > 0.0)) throw NumericalError("alpha has a non-positive entry");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericalError("alpha does not sum to one");
  if (state_.current >= spec_.size()) throw NumericalError("allocation out of range");
  if (!std::isfinite(component_log_density(state_.current)))
    throw NumericalError("current model has non-finite density after iteration " +
                         std::to_string(state_.iteration));
}

RaoBlackwellEstimate rao_blackwell_alpha(std::span<const std::uint32_t> z_trace,
                                         std::span<const double> p) {
  if (z_trace.empty()) throw InvalidArgument("empty allocation trace");
  const std::size_t n = p.size();
  double p0 = 0.0;
  for (double v : p) p0 += v;
  RaoBlackwellEstimate out;
  out.rao_blackwell.values.resize(n);
  out.se.resize(n);
  std::vector<double> series(z_trace.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < z_trace.size(); ++t)
      series[t] = (p[i] + (z_trace[t] == i ? 1.0 : 0.0)) / (p0 + 1.0);
    double s = 0.0;
    for (double v : series) s += v;
    out.rao_blackwell.values[i] = s / static_cast<double>(series.size());
    out.se[i] = diagnostics::batch_means_se(series);
  }
  return out;
}

ChainOutput run_chain(const MixtureSpec& spec, const ChainConfig& config) {
  config.validate();
  Chain chain(spec, config.seed);
  const std::size_t n = spec.size();
  const std::uint64_t burnin = config.effective_burnin();

  ChainOutput out;
  for (const auto& c : spec.components) out.model_names.push_back(c->name());
  for (const auto& s : spec.slots) out.param_names.push_back(s.name);
  if (spec.missing) out.missing_names = spec.missing->summary_names();
  out.dirichlet_p = spec.dirichlet_p;
  out.seed = config.seed;
  out.iterations = config.iterations;
  out.burnin = burnin;
  out.thin = config.thin;
  out.occupancy.assign(n, 0);

  const std::uint64_t expected = (config.iterations - burnin + config.thin - 1) / config.thin;
  out.z_trace.reserve(expected);
  out.alpha_trace.reserve(expected * n);
  if (config.record_theta) out.theta_trace.reserve(expected * spec.slots.size());

  for (std::uint64_t it = 0; it < config.iterations; ++it) {
    chain.sweep();
    if (config.check_invariants) chain.check_invariants();
    if (it < burnin || (it - burnin) % config.thin != 0) continue;
    const auto& st = chain.state();
    ++out.retained;
    ++out.occupancy[st.current];
    out.z_trace.push_back(static_cast<std::uint32_t>(st.current));
    out.alpha_trace.insert(out.alpha_trace.end(), st.alpha.begin(), st.alpha.end());
    if (config.record_theta)
      out.theta_trace.insert(out.theta_trace.end(), st.theta.begin(), st.theta.end());
    if (spec.missing && !out.missing_names.empty()) {
      const auto s = spec.missing->summary();
      out.missing_trace.insert(out.missing_trace.end(), s.begin(), s.end());
    }
  }

  const auto rb = rao_blackwell_alpha(out.z_trace, spec.dirichlet_p);
  out.rao_blackwell = rb.rao_blackwell;
  out.rb_se = rb.se;
  out.plain.values.resize(n);
  out.plain_se.resize(n);
  out.ess.resize(n);
  out.reliable.resize(n);
  out.bounds_violation.resize(n);

  double p0 = 0.0;
  for (double p : spec.dirichlet_p) p0 += p;
  std::vector<double> col(out.retained);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < out.retained; ++t) col[t] = out.alpha_trace[t * n + i];
    const auto plain = diagnostics::summarize(col);
    out.plain.values[i] = plain.mean;
    out.plain_se[i] = plain.se;
    for (std::size_t t = 0; t < out.retained; ++t)
      col[t] = (spec.dirichlet_p[i] + (out.z_trace[t] == i ? 1.0 : 0.0)) / (p0 + 1.0);
    const auto rbs = diagnostics::summarize(col);
    out.ess[i] = rbs.ess;
    out.reliable[i] = rbs.reliable;
    const double lo = spec.dirichlet_p[i] / (p0 + 1.0);
    const double hi = (spec.dirichlet_p[i] + 1.0) / (p0 + 1.0);
    auto outside = [&](double v) { return v < lo - 1e-12 || v > hi + 1e-12; };
    out.bounds_violation[i] = outside(out.rao_blackwell.values[i]) || outside(out.plain.values[i]);
  }
  return out;
}

std::vector<ChainOutput> run_replicates(const SpecFactory& factory,
                                        const std::vector<double>& dirichlet_p,
                                        const ChainConfig& config, std::size_t replicates,
                                        std::size_t threads) {
  std::vector<ChainOutput> outputs(replicates);
  std::vector<std::exception_ptr> errors(replicates);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < replicates; r = next++) {
      try {
        ChainConfig c = config;
        c.seed = Rng::replica_seed(config.seed, r);
        outputs[r] = run_chain(factory(dirichlet_p), c);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, replicates));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return outputs;
}

BayesFactorEstimates estimate_bayes_factors(const ChainOutput& out, std::size_t reference) {
  BayesFactorEstimates est;
  est.reference = reference;
  const auto moments = bfcore::dirichlet_moments(out.dirichlet_p);
  try {
    est.general = bfcore::solve_general(bfcore::build_A(moments, out.rao_blackwell), reference);
  } catch (const Error& e) {
    est.general_error = e.what();
  }
  try {
    est.dirichlet_fast = bfcore::solve_dirichlet_fast(moments, out.rao_blackwell, reference);
  } catch (const Error& e) {
    est.fast_error = e.what();
  }
  try {
    est.occupancy = bfcore::occupancy_bf(out.occupancy_fraction(), moments);
  } catch (const Error& e) {
    est.occupancy_error = e.what();
  }
  return est;
}

std::vector<double> balance_dirichlet(
    const std::function<ChainOutput(const std::vector<double>&)>& run_pilot, std::size_t n,
    std::size_t max_rounds, double boost, double max_ratio) {
  std::vector<double> p(n, 1.0);
  auto normalise = [&](std::vector<double>& v) {
    const double lo = *std::min_element(v.begin(), v.end());
    for (auto& x : v) x = std::min(x / lo, max_ratio);
  };
  for (std::size_t round = 0; round < max_rounds; ++round) {
    const auto pilot = run_pilot(p);
    const auto occ = pilot.occupancy_fraction();
    bool all_visited = true;
    for (std::size_t i = 0; i < n; ++i)
      if (occ[i] == 0.0) all_visited = false;
    if (all_visited) {
      // m_i ∝ occ_i / p_i, and p_i ∝ 1 / m_i balances alpha_i m_i.
      for (std::size_t i = 0; i < n; ++i) p[i] = p[i] / occ[i];
      normalise(p);
      return p;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (occ[i] == 0.0) p[i] *= boost;
    normalise(p);
  }
  return p;
}

void write_trace_csv(std::ostream& os, const ChainOutput& out) {
  const std::size_t n = out.size();
  const std::size_t d = out.param_names.size();
  const std::size_t ms = out.missing_names.size();
  const bool has_theta = out.theta_trace.size() == out.retained * d && d > 0;
  const bool has_missing = ms > 0 && out.missing_trace.size() == out.retained * ms;
  os << "iter,z_index";
  for (std::size_t i = 0; i < n; ++i) os << ",alpha_" << (i + 1);
  if (has_theta)
    for (const auto& name : out.param_names) os << ',' << name;
  if (has_missing)
    for (const auto& name : out.missing_names) os << ',' << name;
  os << '\n';
  const auto old = os.precision(17);
  for (std::size_t t = 0; t < out.retained; ++t) {
    os << (out.burnin + t * out.thin + 1) << ',' << (out.z_trace[t] + 1);
    for (std::size_t i = 0; i < n; ++i) os << ',' << out.alpha_trace[t * n + i];
    if (has_theta)
      for (std::size_t s = 0; s < d; ++s) os << ',' << out.theta_trace[t * d + s];
    if (has_missing)
      for (std::size_t s = 0; s < ms; ++s) os << ',' << out.missing_trace[t * ms + s];
    os << '\n';
  }
  os.precision(old);
}

}  // namespace mixbf::mcmc
