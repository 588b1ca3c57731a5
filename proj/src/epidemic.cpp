#include "mixbf/epidemic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "mixbf/error.hpp"

namespace mixbf::epidemic {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct EventLess {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time < b.time;
    return a.type == EventType::infection && b.type == EventType::removal;
  }
};

double log_count(long k) {
  static const auto table = [] {
    std::vector<double> t(1024);
    for (std::size_t i = 1; i < t.size(); ++i) t[i] = std::log(static_cast<double>(i));
    return t;
  }();
  return k < static_cast<long>(table.size()) ? table[static_cast<std::size_t>(k)]
                                             : std::log(static_cast<double>(k));
}

}  // namespace

// --- trajectories ------------------------------------------------------------

void Trajectory::sort_events() { std::sort(events.begin(), events.end(), EventLess{}); }

void Trajectory::validate() const {
  if (s0 < 0 || i0 < 0) throw InvalidArgument("negative initial counts");
  long s = s0, i = i0;
  double prev = start;
  for (const auto& e : events) {
    if (e.time < prev) throw InvalidArgument("trajectory events are not sorted");
    prev = e.time;
    if (e.type == EventType::infection) {
      --s;
      ++i;
    } else {
      --i;
    }
    if (s < 0 || i < 0) throw InvalidArgument("trajectory drives S or I negative");
  }
}

Integrals integrals(const Trajectory& traj, double t0, double t1) {
  Integrals out;
  double t = traj.start;
  long s = traj.s0, i = traj.i0;
  auto add = [&](double a, double b) {
    a = std::max(a, t0);
    b = std::min(b, t1);
    if (b > a) {
      out.si += static_cast<double>(s * i) * (b - a);
      out.i += static_cast<double>(i) * (b - a);
    }
  };
  for (const auto& e : traj.events) {
    if (e.time >= t1) break;
    add(t, e.time);
    t = e.time;
    if (e.type == EventType::infection) {
      --s;
      ++i;
    } else {
      --i;
    }
  }
  add(t, t1);
  return out;
}

Replay replay(const Trajectory& traj, double t1) {
  Replay r;
  double t = traj.start;
  long s = traj.s0, i = traj.i0;
  for (const auto& e : traj.events) {
    if (e.time > t1) break;
    const double dt = e.time - t;
    r.integ.si += static_cast<double>(s * i) * dt;
    r.integ.i += static_cast<double>(i) * dt;
    t = e.time;
    if (i < 1) {
      r.feasible = false;
      return r;
    }
    if (e.type == EventType::infection) {
      if (s < 1) {
        r.feasible = false;
        return r;
      }
      r.sum_log_i_at_infection += log_count(i);
      r.sum_log_s_at_infection += log_count(s);
      ++r.infections;
      --s;
      ++i;
    } else {
      r.sum_log_i_at_removal += log_count(i);
      ++r.removals;
      --i;
    }
  }
  if (t1 > t) {
    r.integ.si += static_cast<double>(s * i) * (t1 - t);
    r.integ.i += static_cast<double>(i) * (t1 - t);
  }
  r.final_s = s;
  r.final_i = i;
  return r;
}

// --- ex4: linked infection times -------------------------------------------

std::size_t AugmentationEx4::initial() const {
  if (infection.empty()) throw InvalidArgument("empty augmentation");
  return static_cast<std::size_t>(std::min_element(infection.begin(), infection.end()) -
                                  infection.begin());
}

double AugmentationEx4::sum_periods() const {
  double s = 0.0;
  for (std::size_t j = 0; j < n(); ++j) s += removal[j] - infection[j];
  return s;
}

Trajectory AugmentationEx4::trajectory(std::size_t susceptibles) const {
  const std::size_t p = initial();
  Trajectory t;
  t.start = infection[p];
  t.s0 = static_cast<long>(susceptibles);
  t.i0 = 1;
  t.events.reserve(2 * n());
  for (std::size_t j = 0; j < n(); ++j) {
    if (j != p) t.events.push_back({infection[j], EventType::infection});
    t.events.push_back({removal[j], EventType::removal});
  }
  t.sort_events();
  return t;
}

double gamma_log_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x - std::lgamma(shape);
}

namespace {

struct Ex4Stats {
  bool feasible = false;
  std::size_t n = 0;
  double sum_log_i = 0.0;  // over non-initial infections
  double si = 0.0;         // int S I from the first infection to the last removal
  double sum_d = 0.0;
  double sum_log_d = 0.0;
};

Ex4Stats ex4_stats(const AugmentationEx4& aug, std::size_t susceptibles) {
  Ex4Stats st;
  st.n = aug.n();
  if (st.n == 0 || aug.infection.size() != st.n) return st;
  for (std::size_t j = 0; j < st.n; ++j) {
    const double d = aug.removal[j] - aug.infection[j];
    if (!(d > 0.0)) return st;
    st.sum_d += d;
    st.sum_log_d += std::log(d);
  }
  const auto traj = aug.trajectory(susceptibles);
  const double end = *std::max_element(aug.removal.begin(), aug.removal.end());
  const auto rep = replay(traj, end);
  if (!rep.feasible) return st;
  st.feasible = true;
  st.sum_log_i = rep.sum_log_i_at_infection;
  st.si = rep.integ.si;
  return st;
}

}  // namespace

double ex4_loglik(const AugmentationEx4& aug, std::size_t susceptibles, double beta, double eta,
                  double shape) {
  const auto st = ex4_stats(aug, susceptibles);
  if (!st.feasible) return kNegInf;
  const double n = static_cast<double>(st.n);
  const double scale = beta / static_cast<double>(susceptibles);
  const double infections = st.n > 1 ? (n - 1.0) * std::log(scale) : 0.0;
  const double periods = n * (shape * std::log(eta) - std::lgamma(shape)) +
                         (shape - 1.0) * st.sum_log_d - eta * st.sum_d;
  return infections + st.sum_log_i - scale * st.si + periods;
}

double ex4_log_collapsed(const AugmentationEx4& aug, std::size_t susceptibles, double shape) {
  const auto st = ex4_stats(aug, susceptibles);
  if (!st.feasible) return kNegInf;
  const double n = static_cast<double>(st.n), big_n = static_cast<double>(susceptibles);
  // beta ~ Gamma(1, 1): int (beta/N)^{n-1} e^{-beta (A/N + 1)} dbeta.
  const double infection = -(n - 1.0) * std::log(big_n) + std::lgamma(n) - n * std::log1p(st.si / big_n);
  // eta ~ Gamma(1, 1) against n Gamma(shape, eta) period densities.
  const double periods = (shape - 1.0) * st.sum_log_d - n * std::lgamma(shape) +
                         std::lgamma(n * shape + 1.0) - (n * shape + 1.0) * std::log1p(st.sum_d);
  return st.sum_log_i + infection + periods;
}

AugmentationEx4 ex4_initialize(std::vector<double> removal, std::size_t susceptibles) {
  if (removal.empty()) throw InvalidArgument("no removal times");
  std::sort(removal.begin(), removal.end());
  if (removal.size() > susceptibles + 1)
    throw InvalidArgument("more removals than individuals in the population");
  AugmentationEx4 aug;
  aug.removal = std::move(removal);
  aug.infection.resize(aug.n());
  const double span = aug.removal.back() - aug.removal.front();
  double tau = std::max(span / static_cast<double>(aug.n()), 1e-3 * (1.0 + std::abs(aug.removal.back())));
  for (int attempt = 0; attempt < 200; ++attempt, tau *= 2.0) {
    for (std::size_t j = 0; j < aug.n(); ++j) aug.infection[j] = aug.removal[j] - tau;
    if (std::isfinite(ex4_loglik(aug, susceptibles, 1.0, 1.0, 1.0))) return aug;
  }
  throw InfeasibleState("could not construct feasible infection times");
}

double ex4_gibbs_beta(const AugmentationEx4& aug, std::size_t susceptibles, Rng& rng) {
  const auto traj = aug.trajectory(susceptibles);
  const double end = *std::max_element(aug.removal.begin(), aug.removal.end());
  const double si = integrals(traj, traj.start, end).si;
  return rng.gamma(static_cast<double>(aug.n()), si / static_cast<double>(susceptibles) + 1.0);
}

double ex4_gibbs_rate(const AugmentationEx4& aug, double shape, Rng& rng) {
  return rng.gamma(static_cast<double>(aug.n()) * shape + 1.0, aug.sum_periods() + 1.0);
}

namespace {

bool ex4_mh_step(AugmentationEx4& aug, std::size_t susceptibles, double beta, double eta,
                 double shape, double delta, Rng& rng, double& loglik) {
  const std::size_t j = rng.uniform_index(aug.n());
  const double old = aug.infection[j];
  const double proposal = aug.removal[j] - rng.exponential(delta);
  aug.infection[j] = proposal;
  const double ll = ex4_loglik(aug, susceptibles, beta, eta, shape);
  if (ll > kNegInf) {
    const double log_accept = ll - loglik + delta * (old - proposal);
    if (log_accept >= 0.0 || std::log(rng.uniform()) < log_accept) {
      loglik = ll;
      return true;
    }
  }
  aug.infection[j] = old;
  return false;
}

}  // namespace

bool ex4_mh_infection(AugmentationEx4& aug, std::size_t susceptibles, double beta, double eta,
                      double shape, double delta, Rng& rng) {
  if (!(delta > 0.0)) throw InvalidArgument("proposal rate delta must be positive");
  double ll = ex4_loglik(aug, susceptibles, beta, eta, shape);
  if (!(ll > kNegInf)) throw InfeasibleState("current infection times are infeasible");
  return ex4_mh_step(aug, susceptibles, beta, eta, shape, delta, rng, ll);
}

Ex4Missing::Ex4Missing(std::vector<double> removal, Ex4Options options, std::vector<ModelSlots> models)
    : removal_(std::move(removal)), options_(options), models_(std::move(models)) {
  if (!(options_.delta > 0.0)) throw InvalidArgument("proposal rate delta must be positive");
  if (options_.susceptibles < 1) throw InvalidArgument("population needs at least one susceptible");
  aug_ = ex4_initialize(removal_, options_.susceptibles);
}

void Ex4Missing::initialize(std::span<const double>, Rng&) {
  aug_ = ex4_initialize(removal_, options_.susceptibles);
}

void Ex4Missing::update(std::size_t current, std::span<const double> theta, Rng& rng) {
  const auto& m = models_.at(current);
  const double beta = theta[m.beta], eta = theta[m.rate];
  double ll = ex4_loglik(aug_, options_.susceptibles, beta, eta, m.shape);
  if (!(ll > kNegInf)) throw InfeasibleState("infection times infeasible under the current model");
  const std::size_t k = options_.infection_updates.value_or(aug_.n());
  for (std::size_t u = 0; u < k; ++u) {
    ++moves_.proposed;
    if (ex4_mh_step(aug_, options_.susceptibles, beta, eta, m.shape, options_.delta, rng, ll))
      ++moves_.accepted;
  }
}

std::vector<double> Ex4Missing::summary() const {
  return {aug_.sum_periods(), aug_.infection[aug_.initial()]};
}

Ex4Model::Ex4Model(std::string name, std::shared_ptr<const Ex4Missing> missing, std::size_t beta_slot,
                   std::size_t rate_slot, double shape)
    : name_(std::move(name)), missing_(std::move(missing)), beta_slot_(beta_slot),
      rate_slot_(rate_slot), shape_(shape) {
  if (!missing_) throw InvalidArgument("missing augmentation");
  if (!(shape_ > 0.0)) throw InvalidArgument("infectious-period shape must be positive");
}

double Ex4Model::log_augmented_density(std::span<const double> theta) const {
  return ex4_loglik(missing_->augmentation(), missing_->susceptibles(), theta[beta_slot_],
                    theta[rate_slot_], shape_);
}

void Ex4Model::update_params_current(std::span<double> theta, Rng& rng) {
  const auto& aug = missing_->augmentation();
  theta[beta_slot_] = ex4_gibbs_beta(aug, missing_->susceptibles(), rng);
  theta[rate_slot_] = ex4_gibbs_rate(aug, shape_, rng);
}

double Ex4Model::sample_prior(std::size_t, Rng& rng) const { return rng.gamma(1.0, 1.0); }

std::optional<double> Ex4Model::log_collapsed_density() const {
  return ex4_log_collapsed(missing_->augmentation(), missing_->susceptibles(), shape_);
}

mcmc::MixtureSpec ex4_spec(const std::vector<double>& removal, const Ex4Options& options,
                           std::vector<double> dirichlet_p) {
  auto missing = std::make_shared<Ex4Missing>(
      removal, options,
      std::vector<Ex4Missing::ModelSlots>{{0, 1, options.shape_m1}, {2, 3, options.shape_m2}});
  mcmc::MixtureSpec spec;
  spec.components.push_back(std::make_shared<Ex4Model>("exp_period", missing, 0, 1, options.shape_m1));
  spec.components.push_back(std::make_shared<Ex4Model>("gamma_period", missing, 2, 3, options.shape_m2));
  spec.slots = {{"beta1", 0}, {"gamma", 0}, {"beta2", 1}, {"lambda", 1}};
  spec.missing = missing;
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

// --- ex5: variable infection count -----------------------------------------

void Ex5Data::validate() const {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be positive");
  if (removal.empty()) throw InvalidArgument("at least one removal time is required");
  if (population < n()) throw InvalidArgument("more removals than individuals");
  double prev = 0.0;
  for (double r : removal) {
    if (!(r > 0.0) || r < prev || r > horizon)
      throw InvalidArgument("removal times must be sorted and lie in (0, T]");
    prev = r;
  }
}

Trajectory AugmentationEx5::trajectory(const Ex5Data& data) const {
  Trajectory t;
  t.start = 0.0;
  t.s0 = static_cast<long>(data.population) - 1;
  t.i0 = 1;
  t.events.reserve(infection.size() + data.n());
  for (double x : infection) t.events.push_back({x, EventType::infection});
  for (double r : data.removal) t.events.push_back({r, EventType::removal});
  t.sort_events();
  return t;
}

namespace {

bool ex5_times_valid(const AugmentationEx5& aug, const Ex5Data& data) {
  if (aug.m() > data.population) return false;
  double prev = 0.0;
  for (double x : aug.infection) {
    if (!(x > prev) || !(x < data.horizon)) return false;
    prev = x;
  }
  return true;
}

}  // namespace

namespace {

// log of int x^k Gamma(x; a, b) dx-weighted exp(-x c): b^a Gamma(k+a) / (Gamma(a) (c+b)^{k+a}).
double log_gamma_integral(double k, double c, double a, double b) {
  return a * std::log(b) + std::lgamma(k + a) - std::lgamma(a) - (k + a) * std::log(c + b);
}

}  // namespace

double ex5_log_collapsed_poisson(const Ex5Data& data, double prior_shape, double prior_rate) {
  return log_gamma_integral(static_cast<double>(data.n()), data.horizon, prior_shape, prior_rate);
}

double ex5_log_collapsed_epidemic(const AugmentationEx5& aug, const Ex5Data& data, double prior_shape,
                                  double prior_rate) {
  if (!ex5_times_valid(aug, data)) return kNegInf;
  const auto rep = replay(aug.trajectory(data), data.horizon);
  if (!rep.feasible) return kNegInf;
  return rep.sum_log_s_at_infection + rep.sum_log_i_at_infection + rep.sum_log_i_at_removal +
         log_gamma_integral(static_cast<double>(rep.infections), rep.integ.si, prior_shape, prior_rate) +
         log_gamma_integral(static_cast<double>(rep.removals), rep.integ.i, prior_shape, prior_rate);
}

bool ex5_feasible(const AugmentationEx5& aug, const Ex5Data& data) {
  if (!ex5_times_valid(aug, data)) return false;
  return replay(aug.trajectory(data), data.horizon).feasible;
}

double ex5_loglik(const AugmentationEx5& aug, const Ex5Data& data, double beta, double gamma) {
  if (!ex5_times_valid(aug, data)) return kNegInf;
  const auto rep = replay(aug.trajectory(data), data.horizon);
  if (!rep.feasible) return kNegInf;
  double ll = rep.sum_log_s_at_infection + rep.sum_log_i_at_infection + rep.sum_log_i_at_removal;
  if (rep.infections > 0) ll += static_cast<double>(rep.infections) * std::log(beta);
  if (rep.removals > 0) ll += static_cast<double>(rep.removals) * std::log(gamma);
  return ll - beta * rep.integ.si - gamma * rep.integ.i;
}

void MissingPriorEx5::validate() const {
  if (!(mu > 0.0)) throw InvalidArgument("truncated-exponential rate must be positive");
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidArgument("geometric parameter must lie in (0, 1)");
}

double truncated_geometric_log_pmf(std::size_t m, std::size_t n, std::size_t population, double theta) {
  if (m < n || m > population) return kNegInf;
  const double q = std::log1p(-theta);
  const double norm = std::log(-std::expm1(static_cast<double>(population - n + 1) * q));
  return static_cast<double>(m - n) * q + std::log(theta) - norm;
}

double truncated_exponential_log_pdf(double x, double rate, double lo, double hi) {
  if (!(x > lo && x < hi)) return kNegInf;
  return std::log(rate) - rate * (x - lo) - std::log(-std::expm1(-rate * (hi - lo)));
}

double sample_truncated_exponential(double rate, double lo, double hi, Rng& rng) {
  const double u = rng.uniform();
  const double x = lo - std::log1p(u * std::expm1(-rate * (hi - lo))) / rate;
  // Rounding can land on an endpoint when hi - lo is tiny.
  if (x <= lo) return std::nextafter(lo, hi);
  if (x >= hi) return std::nextafter(hi, lo);
  return x;
}

AugmentationEx5 ex5_missing_sample(const Ex5Data& data, const MissingPriorEx5& prior, Rng& rng,
                                   double* log_density) {
  const std::size_t n = data.n(), big_n = data.population;
  const double q = 1.0 - prior.theta;
  const std::size_t span = big_n - n;
  const double tail = std::pow(q, static_cast<double>(span + 1));
  // Long chains pile up against T; a draw with two times in the same double
  // is redrawn.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double u = rng.uniform();
    auto k = static_cast<std::size_t>(std::floor(std::log1p(-u * (1.0 - tail)) / std::log(q)));
    k = std::min(k, span);
    const std::size_t m = n + k;

    AugmentationEx5 aug;
    aug.infection.reserve(m - 1);
    double lp = truncated_geometric_log_pmf(m, n, big_n, prior.theta);
    double prev = 0.0;
    for (std::size_t j = 1; j < m && lp > kNegInf; ++j) {
      const double hi = j <= n ? data.removal[j - 1] : data.horizon;
      const double x = sample_truncated_exponential(prior.mu, prev, hi, rng);
      lp += truncated_exponential_log_pdf(x, prior.mu, prev, hi);
      aug.infection.push_back(x);
      prev = x;
    }
    if (lp == kNegInf) continue;
    if (log_density) *log_density = lp;
    return aug;
  }
  throw NumericalError("could not draw representable infection times");
}

double ex5_missing_log_density(const AugmentationEx5& aug, const Ex5Data& data,
                               const MissingPriorEx5& prior) {
  const std::size_t n = data.n(), m = aug.m();
  double lp = truncated_geometric_log_pmf(m, n, data.population, prior.theta);
  if (lp == kNegInf) return kNegInf;
  double prev = 0.0;
  for (std::size_t j = 1; j < m; ++j) {
    const double hi = j <= n ? data.removal[j - 1] : data.horizon;
    const double x = aug.infection[j - 1];
    const double term = truncated_exponential_log_pdf(x, prior.mu, prev, hi);
    if (term == kNegInf) return kNegInf;
    lp += term;
    prev = x;
  }
  return lp;
}

void ex5_dimension_move(AugmentationEx5& aug, const Ex5Data& data,
                        const std::function<double(const AugmentationEx5&)>& log_target, Rng& rng,
                        DimensionMoveStats* stats) {
  const std::size_t n = data.n(), big_n = data.population;
  const double horizon = data.horizon;
  struct Avail {
    bool move, add, del;
    double count() const { return static_cast<double>(move + add + del); }
  };
  auto avail = [&](std::size_t m) { return Avail{m >= 2, m < big_n, m > n && m >= 2}; };

  const std::size_t m = aug.m();
  const Avail a = avail(m);
  if (a.count() == 0) return;
  const double cur = log_target(aug);

  // Pick uniformly among the available move types.
  std::vector<int> kinds;
  if (a.move) kinds.push_back(0);
  if (a.add) kinds.push_back(1);
  if (a.del) kinds.push_back(2);
  const int kind = kinds[rng.uniform_index(kinds.size())];

  AugmentationEx5 prop = aug;
  double log_q = 0.0;  // log of reverse / forward proposal densities
  MoveCounter* counter = nullptr;
  if (kind == 0) {
    const std::size_t idx = rng.uniform_index(m - 1);
    prop.infection.erase(prop.infection.begin() + static_cast<std::ptrdiff_t>(idx));
    const double t = rng.uniform(0.0, horizon);
    prop.infection.insert(std::upper_bound(prop.infection.begin(), prop.infection.end(), t), t);
    if (stats) counter = &stats->move;
  } else if (kind == 1) {
    const double t = rng.uniform(0.0, horizon);
    prop.infection.insert(std::upper_bound(prop.infection.begin(), prop.infection.end(), t), t);
    const std::size_t m_new = m + 1;
    log_q = std::log(horizon) - std::log(avail(m_new).count()) + std::log(a.count()) -
            std::log(static_cast<double>(m_new - 1));
    if (stats) counter = &stats->add;
  } else {
    const std::size_t idx = rng.uniform_index(m - 1);
    prop.infection.erase(prop.infection.begin() + static_cast<std::ptrdiff_t>(idx));
    const std::size_t m_new = m - 1;
    log_q = -std::log(horizon) - std::log(avail(m_new).count()) + std::log(a.count()) +
            std::log(static_cast<double>(m - 1));
    if (stats) counter = &stats->remove;
  }
  if (counter) ++counter->proposed;
  const double next = log_target(prop);
  if (!(next > kNegInf)) return;
  const double log_accept = next - cur + log_q;
  if (log_accept >= 0.0 || std::log(rng.uniform()) < log_accept) {
    aug = std::move(prop);
    if (counter) ++counter->accepted;
  }
}

Ex5Missing::Ex5Missing(Ex5Data data, Ex5Options options, std::size_t epidemic_model,
                       std::size_t beta_slot, std::size_t gamma_slot)
    : data_(std::move(data)), options_(options), epidemic_model_(epidemic_model),
      beta_slot_(beta_slot), gamma_slot_(gamma_slot) {
  data_.validate();
  options_.missing_prior.validate();
  if (!(options_.prior_shape > 0.0) || !(options_.prior_rate > 0.0))
    throw InvalidArgument("gamma prior parameters must be positive");
}

void Ex5Missing::initialize(std::span<const double>, Rng& rng) {
  aug_ = ex5_missing_sample(data_, options_.missing_prior, rng);
}

void Ex5Missing::update(std::size_t current, std::span<const double> theta, Rng& rng) {
  if (current != epidemic_model_) {
    aug_ = ex5_missing_sample(data_, options_.missing_prior, rng);
    return;
  }
  const double beta = theta[beta_slot_], gamma = theta[gamma_slot_];
  auto target = [&](const AugmentationEx5& a) { return ex5_loglik(a, data_, beta, gamma); };
  const std::size_t k = options_.moves_per_sweep.value_or(data_.n());
  for (std::size_t s = 0; s < k; ++s) ex5_dimension_move(aug_, data_, target, rng, &stats_);
}

Ex5PoissonModel::Ex5PoissonModel(std::shared_ptr<const Ex5Missing> missing, std::size_t slot)
    : missing_(std::move(missing)), slot_(slot) {
  if (!missing_) throw InvalidArgument("missing augmentation");
}

double Ex5PoissonModel::log_augmented_density(std::span<const double> theta) const {
  const auto& d = missing_->data();
  return static_cast<double>(d.n()) * std::log(theta[slot_]) - theta[slot_] * d.horizon;
}

double Ex5PoissonModel::log_missing_prior(std::span<const double>) const {
  return ex5_missing_log_density(missing_->augmentation(), missing_->data(),
                                 missing_->options().missing_prior);
}

std::optional<double> Ex5PoissonModel::log_collapsed_density() const {
  const auto& o = missing_->options();
  return ex5_log_collapsed_poisson(missing_->data(), o.prior_shape, o.prior_rate) +
         ex5_missing_log_density(missing_->augmentation(), missing_->data(), o.missing_prior);
}

void Ex5PoissonModel::update_params_current(std::span<double> theta, Rng& rng) {
  const auto& d = missing_->data();
  const auto& o = missing_->options();
  theta[slot_] = rng.gamma(static_cast<double>(d.n()) + o.prior_shape, d.horizon + o.prior_rate);
}

double Ex5PoissonModel::sample_prior(std::size_t, Rng& rng) const {
  const auto& o = missing_->options();
  return rng.gamma(o.prior_shape, o.prior_rate);
}

Ex5EpidemicModel::Ex5EpidemicModel(std::shared_ptr<const Ex5Missing> missing, std::size_t beta_slot,
                                   std::size_t gamma_slot)
    : missing_(std::move(missing)), beta_slot_(beta_slot), gamma_slot_(gamma_slot) {
  if (!missing_) throw InvalidArgument("missing augmentation");
}

double Ex5EpidemicModel::log_augmented_density(std::span<const double> theta) const {
  return ex5_loglik(missing_->augmentation(), missing_->data(), theta[beta_slot_], theta[gamma_slot_]);
}

std::optional<double> Ex5EpidemicModel::log_collapsed_density() const {
  const auto& o = missing_->options();
  return ex5_log_collapsed_epidemic(missing_->augmentation(), missing_->data(), o.prior_shape, o.prior_rate);
}

void Ex5EpidemicModel::update_params_current(std::span<double> theta, Rng& rng) {
  const auto& d = missing_->data();
  const auto& o = missing_->options();
  const auto& aug = missing_->augmentation();
  const auto integ = integrals(aug.trajectory(d), 0.0, d.horizon);
  theta[beta_slot_] = rng.gamma(static_cast<double>(aug.m() - 1) + o.prior_shape, integ.si + o.prior_rate);
  theta[gamma_slot_] = rng.gamma(static_cast<double>(d.n()) + o.prior_shape, integ.i + o.prior_rate);
}

double Ex5EpidemicModel::sample_prior(std::size_t, Rng& rng) const {
  const auto& o = missing_->options();
  return rng.gamma(o.prior_shape, o.prior_rate);
}

mcmc::MixtureSpec ex5_spec(const Ex5Data& data, const Ex5Options& options,
                           std::vector<double> dirichlet_p) {
  auto missing = std::make_shared<Ex5Missing>(data, options, 1, 1, 2);
  mcmc::MixtureSpec spec;
  spec.components.push_back(std::make_shared<Ex5PoissonModel>(missing, 0));
  spec.components.push_back(std::make_shared<Ex5EpidemicModel>(missing, 1, 2));
  spec.slots = {{"lambda", 0}, {"beta", 1}, {"gamma", 1}};
  spec.missing = missing;
  spec.dirichlet_p = std::move(dirichlet_p);
  spec.validate();
  return spec;
}

Ex5Data gastro_data(double horizon) {
  Ex5Data d;
  d.horizon = horizon;
  d.population = kGastroPopulation;
  for (int day = 1; day < 8; ++day) {
    const double t = day + 0.5;
    if (t > horizon) break;
    for (int c = 0; c < kGastroCounts[day]; ++c) d.removal.push_back(t);
  }
  d.validate();
  return d;
}

// --- simulation ---------------------------------------------------------------------

std::vector<double> SirOutcome::sorted_removals() const {
  auto r = removal;
  std::sort(r.begin(), r.end());
  return r;
}

Trajectory SirOutcome::trajectory(std::size_t susceptibles) const {
  Trajectory t;
  t.start = infection.empty() ? 0.0 : infection.front();
  t.s0 = static_cast<long>(susceptibles);
  t.i0 = 1;
  for (std::size_t k = 0; k < infection.size(); ++k) {
    if (k > 0) t.events.push_back({infection[k], EventType::infection});
    t.events.push_back({removal[k], EventType::removal});
  }
  t.sort_events();
  return t;
}

SirOutcome simulate_sir(const SirParams& params, Rng& rng) {
  if (!(params.beta >= 0.0) || !(params.period_shape > 0.0) || !(params.period_rate > 0.0))
    throw InvalidArgument("SIR parameters must be positive");
  SirOutcome out;
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> removals;
  auto infect = [&](double t) {
    out.infection.push_back(t);
    const double r = t + rng.gamma(params.period_shape, params.period_rate);
    out.removal.push_back(r);
    removals.emplace(r, out.infection.size() - 1);
  };
  infect(0.0);
  double t = 0.0;
  long s = static_cast<long>(params.susceptibles), i = 1;
  const double scale = params.mass_action ? 1.0 : 1.0 / static_cast<double>(std::max<std::size_t>(1, params.susceptibles));
  while (i > 0) {
    const double rate = params.beta * scale * static_cast<double>(s * i);
    const double next_infection = rate > 0.0 ? t + rng.exponential(rate) : HUGE_VAL;
    const double next_removal = removals.top().first;
    if (next_infection < next_removal) {
      t = next_infection;
      infect(t);
      out.events.push_back({t, EventType::infection});
      --s;
      ++i;
    } else {
      t = next_removal;
      removals.pop();
      out.events.push_back({t, EventType::removal});
      --i;
    }
  }
  return out;
}

models::EventData simulate_poisson(double lambda, double horizon, Rng& rng) {
  if (!(lambda >= 0.0) || !(horizon > 0.0)) throw InvalidArgument("Poisson rate and horizon must be positive");
  models::EventData d;
  d.horizon = horizon;
  const double mean = lambda * horizon;
  const auto count = mean > 0.0 ? static_cast<std::size_t>(rng.poisson(mean)) : std::size_t{0};
  d.times.resize(count);
  for (auto& x : d.times) x = rng.uniform(0.0, horizon);
  std::sort(d.times.begin(), d.times.end());
  return d;
}

Scenario scenario(char name) {
  Scenario s;
  s.name = name;
  s.truth.susceptibles = 50;
  switch (name) {
    case 'A':
      s.truth.beta = 2.0, s.truth.period_shape = 5.0, s.truth.period_rate = 5.0, s.m2_shape = 5.0;
      break;
    case 'B':
      s.truth.beta = 1.0, s.truth.period_shape = 1.0, s.truth.period_rate = 0.75, s.m2_shape = 1.0;
      break;
    case 'C':
      s.truth.beta = 3.0, s.truth.period_shape = 1.0, s.truth.period_rate = 1.0, s.m2_shape = 2.0;
      break;
    default:
      throw InvalidArgument(std::string("unknown scenario '") + name + "'");
  }
  return s;
}

bool is_major(const SirOutcome& outcome, std::size_t susceptibles) {
  return static_cast<double>(outcome.final_size()) >= 0.2 * static_cast<double>(susceptibles);
}

}  // namespace mixbf::epidemic
