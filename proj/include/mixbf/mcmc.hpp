#pragma once

// Allocation-variable Gibbs sampler for a mixture of competing models.
//
// State: mixture weights alpha, allocation z (stored as the index of the
// current model), a shared parameter vector theta (slots may be aliased across
// models) and optional missing data. One sweep is
//
//   z | ...      categorical, q_i ∝ alpha_i pi_i(x, y_I(i) | theta_i) pi_i(y_-I(i) | ...)
//   alpha | ...  Dirichlet(p + z)
//   theta        current model's update; slots unused by the current model
//                are redrawn from their priors
//   y            missing-data update given the current model

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mixbf/bfcore.hpp"
#include "mixbf/diagnostics.hpp"
#include "mixbf/rng.hpp"

namespace mixbf::mcmc {

class ModelComponent {
 public:
  virtual ~ModelComponent() = default;

  virtual std::string name() const = 0;

  // Slots of the shared parameter vector read by this model's likelihood.
  virtual std::vector<std::size_t> slots() const = 0;

  // log pi_i(x, y_I(i) | theta_i). -inf marks an infeasible augmentation.
  virtual double log_augmented_density(std::span<const double> theta) const = 0;

  // log pi_i(y_-I(i) | x, y_I(i), theta); zero when the model needs no padding.
  virtual double log_missing_prior(std::span<const double> /*theta*/) const { return 0.0; }

  // Full-conditional or Metropolis-Hastings update of this model's slots,
  // valid while this model is current.
  virtual void update_params_current(std::span<double> theta, Rng& rng) = 0;

  // Prior draw for a slot this component owns.
  virtual double sample_prior(std::size_t slot, Rng& rng) const = 0;

  // Prior draw for the listed owned slots. Override when the prior couples
  // slots.
  virtual void sample_prior_block(std::span<double> theta, std::span<const std::size_t> slots,
                                  Rng& rng) const {
    for (std::size_t s : slots) theta[s] = sample_prior(s, rng);
  }

  // log of the augmented density (times any missing-data prior) integrated
  // against the prior of this model's own slots, when that is available in
  // closed form. Required by collapsed allocation updates.
  virtual std::optional<double> log_collapsed_density() const { return std::nullopt; }

  // Starting value for an owned slot. Defaults to a prior draw.
  virtual double initial_value(std::size_t slot, Rng& rng) const { return sample_prior(slot, rng); }
};

// Missing data shared by the mixture. Components that read it hold a
// reference to the concrete object.
class MissingData {
 public:
  virtual ~MissingData() = default;

  // Must leave the data feasible for every model that reads it.
  virtual void initialize(std::span<const double> theta, Rng& rng) = 0;

  // Update from the full conditional implied by the current model.
  virtual void update(std::size_t current, std::span<const double> theta, Rng& rng) = 0;

  // Optional scalar summaries appended to trace rows.
  virtual std::vector<std::string> summary_names() const { return {}; }
  virtual std::vector<double> summary() const { return {}; }
};

struct ParamSlot {
  std::string name;
  std::size_t owner = 0;  // component that supplies the prior
};

struct MixtureSpec {
  std::vector<std::shared_ptr<ModelComponent>> components;
  std::vector<double> dirichlet_p;
  std::vector<ParamSlot> slots;
  std::shared_ptr<MissingData> missing;
  std::size_t initial_model = 0;
  // Draw z with each model's parameters integrated out, then the current
  // model's parameters from their full conditional. Needs every component to
  // provide log_collapsed_density and to own all of its slots.
  bool collapse_allocation = false;

  std::size_t size() const noexcept { return components.size(); }

  // Throws InvalidArgument on n < 2, non-positive p, slots out of range or
  // ownership inconsistencies.
  void validate() const;
};

// Builds a fresh, independent spec; used for replicates and pilot runs.
using SpecFactory = std::function<MixtureSpec(const std::vector<double>& dirichlet_p)>;

struct ChainConfig {
  std::uint64_t iterations = 10000;
  std::optional<std::uint64_t> burnin;  // defaults to 10% of iterations
  std::uint64_t thin = 1;
  std::uint64_t seed = 1;
  bool record_theta = true;
  bool check_invariants = false;

  std::uint64_t effective_burnin() const { return burnin.value_or(iterations / 10); }
  void validate() const;
};

struct ChainState {
  std::vector<double> alpha;
  std::size_t current = 0;
  std::vector<double> theta;
  std::uint64_t iteration = 0;
};

struct ChainOutput {
  std::vector<std::string> model_names;
  std::vector<std::string> param_names;
  std::vector<std::string> missing_names;
  std::vector<double> dirichlet_p;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  std::uint64_t burnin = 0;
  std::uint64_t thin = 1;

  std::uint64_t retained = 0;
  std::vector<std::uint64_t> occupancy;  // retained iterations spent in each model

  bfcore::PosteriorMeans rao_blackwell;  // mean of (p_i + z_i) / (p0 + 1)
  bfcore::PosteriorMeans plain;          // mean of sampled alpha
  std::vector<double> rb_se;
  std::vector<double> plain_se;
  std::vector<double> ess;               // of the Rao-Blackwell series
  std::vector<bool> reliable;
  std::vector<bool> bounds_violation;    // either estimate outside the prior bounds

  std::vector<std::uint32_t> z_trace;    // zero-based model index per retained row
  std::vector<double> alpha_trace;       // retained x n
  std::vector<double> theta_trace;       // retained x d (empty unless recorded)
  std::vector<double> missing_trace;     // retained x missing_names.size()

  std::size_t size() const noexcept { return model_names.size(); }
  std::vector<double> occupancy_fraction() const;
};

// --- single updates --------------------------------------------------------

// Draw from Dirichlet(p + e_current).
std::vector<double> update_alpha(std::size_t current, std::span<const double> p, Rng& rng);

// Normalised q_i ∝ alpha_i exp(log_density_i); -inf entries get probability 0.
std::vector<double> allocation_probabilities(std::span<const double> alpha,
                                             std::span<const double> log_density);

// Categorical draw from allocation_probabilities. Throws InfeasibleState when
// every entry is -inf.
std::size_t update_z(std::span<const double> alpha, std::span<const double> log_density, Rng& rng);

// --- chains ----------------------------------------------------------------

class Chain {
 public:
  Chain(MixtureSpec spec, std::uint64_t seed);

  void sweep();
  const ChainState& state() const noexcept { return state_; }
  const MixtureSpec& spec() const noexcept { return spec_; }
  double component_log_density(std::size_t i) const;
  void check_invariants() const;

 private:
  MixtureSpec spec_;
  Rng rng_;
  ChainState state_;
  // refresh_[current][owner]: slots owned by `owner` that the current model
  // does not read, redrawn from the prior each sweep.
  std::vector<std::vector<std::vector<std::size_t>>> refresh_;
  std::vector<double> logdens_;
};

ChainOutput run_chain(const MixtureSpec& spec, const ChainConfig& config);

// R independent chains with seeds derived from config.seed; up to `threads`
// run concurrently. Output order follows replicate index.
std::vector<ChainOutput> run_replicates(const SpecFactory& factory,
                                        const std::vector<double>& dirichlet_p,
                                        const ChainConfig& config, std::size_t replicates,
                                        std::size_t threads = 1);

// --- estimators ------------------------------------------------------------

struct RaoBlackwellEstimate {
  bfcore::PosteriorMeans rao_blackwell;
  std::vector<double> se;
};

RaoBlackwellEstimate rao_blackwell_alpha(std::span<const std::uint32_t> z_trace,
                                         std::span<const double> p);

// Bayes factors from a finished chain. All three routes are attempted; a
// route that fails carries its error message instead of values.
struct BayesFactorEstimates {
  std::size_t reference = 0;
  std::optional<bfcore::BayesFactors> general;
  std::optional<bfcore::BayesFactors> dirichlet_fast;
  std::optional<SquareMatrix<double>> occupancy;
  std::string general_error;
  std::string fast_error;
  std::string occupancy_error;
};

BayesFactorEstimates estimate_bayes_factors(const ChainOutput& out, std::size_t reference);

// Dirichlet parameters p_i ∝ 1 / B_ik estimated from a pilot chain, which
// makes the allocation conditional close to uniform. Models the pilot never
// visits get their weight raised by `boost` and the pilot is repeated.
std::vector<double> balance_dirichlet(
    const std::function<ChainOutput(const std::vector<double>&)>& run_pilot, std::size_t n,
    std::size_t max_rounds = 6, double boost = 100.0, double max_ratio = 1e6);

void write_trace_csv(std::ostream& os, const ChainOutput& out);

}  // namespace mixbf::mcmc
