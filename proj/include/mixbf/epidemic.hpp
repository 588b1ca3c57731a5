#pragma once

// SIR epidemics with one initial infective: piecewise-constant trajectories,
// augmented likelihoods over unobserved infection times, the Metropolis-
// Hastings moves that update them, and forward simulators.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixbf/mcmc.hpp"
#include "mixbf/models_basic.hpp"
#include "mixbf/rng.hpp"

namespace mixbf::epidemic {

// --- trajectories ------------------------------------------------------------

enum class EventType { infection, removal };

struct Event {
  double time = 0.0;
  EventType type = EventType::infection;
};

// Starts at `start` with s0 susceptibles and i0 infectives. Events are kept
// sorted by time, infections before removals at equal times.
struct Trajectory {
  double start = 0.0;
  long s0 = 0;
  long i0 = 1;
  std::vector<Event> events;

  void sort_events();
  // Throws InvalidArgument if S or I would go negative.
  void validate() const;
};

struct Integrals {
  double si = 0.0;  // integral of S(t) I(t)
  double i = 0.0;   // integral of I(t)
};

// Exact integrals over [t0, t1] of the right-continuous step functions.
Integrals integrals(const Trajectory& traj, double t0, double t1);

// One pass over the events up to t1, accumulating the quantities every
// augmented likelihood needs. `feasible` is false if some infection sees
// I(t-) = 0 or S(t-) = 0, or some removal sees I(t-) = 0.
struct Replay {
  bool feasible = true;
  std::size_t infections = 0;
  std::size_t removals = 0;
  double sum_log_i_at_infection = 0.0;   // sum of log I(t-) over infections
  double sum_log_s_at_infection = 0.0;   // sum of log S(t-) over infections
  double sum_log_i_at_removal = 0.0;     // sum of log I(t-) over removals
  Integrals integ;
  long final_s = 0;
  long final_i = 0;
};

Replay replay(const Trajectory& traj, double t1);

// --- ex4: two infectious-period models ----------------------------------

// Removal times r_1 <= ... <= r_n and linked infection times. The initial
// infective is the individual with the earliest infection time.
struct AugmentationEx4 {
  std::vector<double> removal;
  std::vector<double> infection;

  std::size_t n() const noexcept { return removal.size(); }
  std::size_t initial() const;  // index of the minimum infection time
  double sum_periods() const;   // sum of r_j - i_j
  Trajectory trajectory(std::size_t susceptibles) const;
};

// Feasible start: every i_j = r_j - tau, doubling tau from a data-based guess
// until the epidemic can be replayed.
AugmentationEx4 ex4_initialize(std::vector<double> removal, std::size_t susceptibles);

double gamma_log_pdf(double x, double shape, double rate);

// sum_{j != p} log(beta/N I(i_j-)) - (beta/N) int_{i_p}^{r_n} S I dt
//   + sum_j log Gamma(r_j - i_j; shape, eta).  -inf when infeasible.
double ex4_loglik(const AugmentationEx4& aug, std::size_t susceptibles, double beta, double eta,
                  double shape);

// ex4_loglik integrated against Gamma(1,1) priors on beta and eta.
double ex4_log_collapsed(const AugmentationEx4& aug, std::size_t susceptibles, double shape);

// Full conditionals under Gamma(1,1) priors when the model is current.
double ex4_gibbs_beta(const AugmentationEx4& aug, std::size_t susceptibles, Rng& rng);
double ex4_gibbs_rate(const AugmentationEx4& aug, double shape, Rng& rng);

struct MoveCounter {
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
  double rate() const noexcept {
    return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

// Picks j uniformly and proposes i_j* = r_j - Exp(delta). Returns acceptance.
bool ex4_mh_infection(AugmentationEx4& aug, std::size_t susceptibles, double beta, double eta,
                      double shape, double delta, Rng& rng);

struct Ex4Options {
  std::size_t susceptibles = 50;
  double shape_m1 = 1.0;  // exponential periods
  double shape_m2 = 5.0;
  double delta = 1.0;
  std::optional<std::size_t> infection_updates;  // per sweep; defaults to n
};

// Augmentation shared by both ex4 models.
class Ex4Missing : public mcmc::MissingData {
 public:
  struct ModelSlots {
    std::size_t beta;
    std::size_t rate;
    double shape;
  };

  Ex4Missing(std::vector<double> removal, Ex4Options options, std::vector<ModelSlots> models);
  void initialize(std::span<const double> theta, Rng& rng) override;
  void update(std::size_t current, std::span<const double> theta, Rng& rng) override;
  std::vector<std::string> summary_names() const override { return {"sum_periods", "initial_time"}; }
  std::vector<double> summary() const override;

  const AugmentationEx4& augmentation() const noexcept { return aug_; }
  std::size_t susceptibles() const noexcept { return options_.susceptibles; }
  const MoveCounter& moves() const noexcept { return moves_; }

 private:
  std::vector<double> removal_;
  Ex4Options options_;
  std::vector<ModelSlots> models_;
  AugmentationEx4 aug_;
  MoveCounter moves_;
};

class Ex4Model : public mcmc::ModelComponent {
 public:
  Ex4Model(std::string name, std::shared_ptr<const Ex4Missing> missing, std::size_t beta_slot,
           std::size_t rate_slot, double shape);
  std::string name() const override { return name_; }
  std::vector<std::size_t> slots() const override { return {beta_slot_, rate_slot_}; }
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;
  std::optional<double> log_collapsed_density() const override;

 private:
  std::string name_;
  std::shared_ptr<const Ex4Missing> missing_;
  std::size_t beta_slot_;
  std::size_t rate_slot_;
  double shape_;
};

// M1: Gamma(1, gamma) periods (slots beta1, gamma); M2: Gamma(shape_m2,
// lambda) periods (slots beta2, lambda).
mcmc::MixtureSpec ex4_spec(const std::vector<double>& removal, const Ex4Options& options,
                           std::vector<double> dirichlet_p);

// --- ex5: epidemic vs Poisson process -----------------------------------------

struct Ex5Data {
  std::vector<double> removal;  // sorted, in (0, T]
  double horizon = 10.0;
  std::size_t population = 89;  // total, including the initial infective

  std::size_t n() const noexcept { return removal.size(); }
  void validate() const;
};

// Infection times i_2 < ... < i_m in (0, T); i_1 = 0 is implicit.
struct AugmentationEx5 {
  std::vector<double> infection;
  std::size_t m() const noexcept { return infection.size() + 1; }
  Trajectory trajectory(const Ex5Data& data) const;
};

bool ex5_feasible(const AugmentationEx5& aug, const Ex5Data& data);

// log of prod beta S(i_j-) I(i_j-) prod gamma I(r_j-) exp(-int_0^T beta S I + gamma I).
double ex5_loglik(const AugmentationEx5& aug, const Ex5Data& data, double beta, double gamma);

// Likelihoods integrated against independent Gamma(prior_shape, prior_rate)
// priors on lambda, or on beta and gamma.
double ex5_log_collapsed_poisson(const Ex5Data& data, double prior_shape, double prior_rate);
double ex5_log_collapsed_epidemic(const AugmentationEx5& aug, const Ex5Data& data, double prior_shape,
                                  double prior_rate);

struct MissingPriorEx5 {
  double mu = 4.0;     // truncated-exponential rate
  double theta = 0.1;  // truncated-geometric parameter for m
  void validate() const;
};

// f(m) = (1-theta)^{m-n} theta / (1 - (1-theta)^{N-n+1}) on m = n..N.
double truncated_geometric_log_pmf(std::size_t m, std::size_t n, std::size_t population, double theta);

double truncated_exponential_log_pdf(double x, double rate, double lo, double hi);
double sample_truncated_exponential(double rate, double lo, double hi, Rng& rng);

// Draws m then i_{j+1} ~ TrExp(mu; i_j, s_j) with s_j = r_j for j <= n and T
// after. If `log_density` is non-null it receives the accumulated log
// probability of the draw.
AugmentationEx5 ex5_missing_sample(const Ex5Data& data, const MissingPriorEx5& prior, Rng& rng,
                                   double* log_density = nullptr);
double ex5_missing_log_density(const AugmentationEx5& aug, const Ex5Data& data,
                               const MissingPriorEx5& prior);

struct DimensionMoveStats {
  MoveCounter move, add, remove;
};

// One move / add / delete step on the infection times, each type chosen with
// equal probability among those available at the current m. `log_target` is
// the log-density of (m, i) w.r.t. counting x Lebesgue measure on ordered
// times; -inf rejects. m stays within [n, N].
void ex5_dimension_move(AugmentationEx5& aug, const Ex5Data& data,
                        const std::function<double(const AugmentationEx5&)>& log_target, Rng& rng,
                        DimensionMoveStats* stats = nullptr);

struct Ex5Options {
  MissingPriorEx5 missing_prior;
  double prior_shape = 1.0;  // Gamma priors for lambda, beta, gamma
  double prior_rate = 1.0;
  std::optional<std::size_t> moves_per_sweep;  // defaults to n
};

class Ex5Missing : public mcmc::MissingData {
 public:
  Ex5Missing(Ex5Data data, Ex5Options options, std::size_t epidemic_model, std::size_t beta_slot,
             std::size_t gamma_slot);
  void initialize(std::span<const double> theta, Rng& rng) override;
  void update(std::size_t current, std::span<const double> theta, Rng& rng) override;
  std::vector<std::string> summary_names() const override { return {"m"}; }
  std::vector<double> summary() const override { return {static_cast<double>(aug_.m())}; }

  const AugmentationEx5& augmentation() const noexcept { return aug_; }
  const Ex5Data& data() const noexcept { return data_; }
  const Ex5Options& options() const noexcept { return options_; }
  const DimensionMoveStats& stats() const noexcept { return stats_; }

 private:
  Ex5Data data_;
  Ex5Options options_;
  std::size_t epidemic_model_;
  std::size_t beta_slot_;
  std::size_t gamma_slot_;
  AugmentationEx5 aug_;
  DimensionMoveStats stats_;
};

class Ex5PoissonModel : public mcmc::ModelComponent {
 public:
  Ex5PoissonModel(std::shared_ptr<const Ex5Missing> missing, std::size_t slot);
  std::string name() const override { return "poisson"; }
  std::vector<std::size_t> slots() const override { return {slot_}; }
  double log_augmented_density(std::span<const double> theta) const override;
  double log_missing_prior(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;
  std::optional<double> log_collapsed_density() const override;

 private:
  std::shared_ptr<const Ex5Missing> missing_;
  std::size_t slot_;
};

class Ex5EpidemicModel : public mcmc::ModelComponent {
 public:
  Ex5EpidemicModel(std::shared_ptr<const Ex5Missing> missing, std::size_t beta_slot,
                   std::size_t gamma_slot);
  std::string name() const override { return "epidemic"; }
  std::vector<std::size_t> slots() const override { return {beta_slot_, gamma_slot_}; }
  double log_augmented_density(std::span<const double> theta) const override;
  void update_params_current(std::span<double> theta, Rng& rng) override;
  double sample_prior(std::size_t slot, Rng& rng) const override;
  std::optional<double> log_collapsed_density() const override;

 private:
  std::shared_ptr<const Ex5Missing> missing_;
  std::size_t beta_slot_;
  std::size_t gamma_slot_;
};

// M1 Poisson process (slot lambda), M2 SIR epidemic (slots beta, gamma).
mcmc::MixtureSpec ex5_spec(const Ex5Data& data, const Ex5Options& options,
                           std::vector<double> dirichlet_p);

// Daily case counts for days 0..7 of the gastroenteritis outbreak.
inline constexpr int kGastroCounts[8] = {1, 0, 4, 2, 3, 3, 10, 5};
inline constexpr std::size_t kGastroPopulation = 89;

// Day-0 case dropped, remaining cases at day + 0.5, keeping those <= T.
Ex5Data gastro_data(double horizon);

// --- simulation -------------------------------------------------------------------

struct SirParams {
  std::size_t susceptibles = 50;
  double beta = 1.0;
  double period_shape = 1.0;
  double period_rate = 1.0;
  // false: total infection rate beta S I / N (ex4);
  // true: beta S I (ex5).
  bool mass_action = false;
};

struct SirOutcome {
  std::vector<double> infection;  // per individual, initial infective first (time 0)
  std::vector<double> removal;    // same order as infection
  std::vector<Event> events;      // time-sorted
  std::size_t final_size() const noexcept { return infection.size(); }
  std::vector<double> sorted_removals() const;
  Trajectory trajectory(std::size_t susceptibles) const;
};

SirOutcome simulate_sir(const SirParams& params, Rng& rng);

// Homogeneous Poisson process on [0, T]: Poisson(lambda T) count, sorted
// uniform times.
models::EventData simulate_poisson(double lambda, double horizon, Rng& rng);

struct Scenario {
  char name = 'A';
  SirParams truth;
  double m2_shape = 1.0;
};

// A: beta 2, Gamma(5,5) periods, M2 shape 5; B: beta 1, Gamma(1,0.75), M2
// shape 1; C: beta 3, Gamma(1,1), M2 shape 2. N = 50 throughout.
Scenario scenario(char name);

// Final size at least 20% of the susceptible population.
bool is_major(const SirOutcome& outcome, std::size_t susceptibles);

}  // namespace mixbf::epidemic
