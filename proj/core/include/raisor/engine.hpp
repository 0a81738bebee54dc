#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "raisor/approx.hpp"
#include "raisor/model.hpp"
#include "raisor/parallel.hpp"
#include "raisor/sampling.hpp"

namespace raisor {

/// When to replenish after a ladder step.
///   threshold:   whenever the post-update RESS is <= r
///   exponential: after every ladder step that stops short of n_total
enum class ReplenishPolicy { threshold, exponential };

std::string to_string(ReplenishPolicy policy);
ReplenishPolicy replenish_policy_from_string(const std::string& name);

struct EngineConfig {
  std::size_t M = 50000;
  double r = 0.2;
  double r_min = 0.1;
  double alpha = 2.0 / 3.0;
  std::size_t B = 20;
  std::size_t K_mix = 10;
  std::size_t N_reduce = 5000;
  std::size_t n0_init = 10;
  std::size_t anneal_max_steps = 50;
  std::uint64_t seed = 1;
  double inflation = 1.2;
  ReplenishPolicy policy = ReplenishPolicy::threshold;

  /// Throws ConfigError on any violated constraint.
  void validate() const;
};

enum class EventKind { init, update, replenish, anneal_step };

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);

struct TraceEvent {
  std::size_t n = 0;
  double ress = 1.0;
  EventKind kind = EventKind::update;
  double seconds = 0.0;      // wall-clock duration of this event
  std::uint64_t n_evals = 0;  // cumulative conditional likelihood evaluations
  double temperature = 1.0;   // < 1 only inside an anneal rescue
};

struct RessTrace {
  std::vector<TraceEvent> events;

  std::size_t count(EventKind kind) const;
  /// Columns: n,ress,event,seconds,n_evals,temperature
  void write_csv(std::ostream& out) const;
  static RessTrace read_csv(std::istream& in);
};

/// Candidate next prefixes: B + 1 geometrically spaced, strictly increasing
/// values from n_current + 1 to min(ceil(n_current / alpha), n_total).
std::vector<std::size_t> plan_batches(std::size_t n_current, std::size_t n_total,
                                      const EngineConfig& config);

/// Multiplies the weights by [y_{prefix+1:n1} | theta] for every particle.
/// Returns the number of conditional evaluations performed.
std::uint64_t recursive_update(WeightedSample& sample, const Model& model, std::size_t n1,
                               const ThreadPool& pool = ThreadPool(1));

/// Sequential importance sampler with adaptive replenishment.
class Engine {
 public:
  using Initializer = std::function<WeightedSample(const Model&, const EngineConfig&, Rng&)>;
  /// Builds a proposal (unconstrained space) from the current weighted sample
  /// with at most the given number of mixture components.
  using Fitter = std::function<MixtureProposal(const WeightedSample&, std::size_t, Rng&)>;
  using Observer = std::function<void(const TraceEvent&, const WeightedSample&)>;

  Engine(const Model& model, EngineConfig config, std::size_t threads = 1);

  /// Default: n0_init = 0 prior start when no initializer is set.
  void set_initializer(Initializer init) { initializer_ = std::move(init); }
  /// Default: weighted SIR to N_reduce, weighted EM (components halved on
  /// starvation), covariances inflated by `inflation`. If the redrawn sample
  /// has RESS below r the fit is retried with half the components, down to
  /// one, and the best attempt is kept.
  void set_fitter(Fitter fitter) { fitter_ = std::move(fitter); }
  void set_observer(Observer observer) { observer_ = std::move(observer); }

  const Model& model() const noexcept { return model_; }
  const EngineConfig& config() const noexcept { return config_; }
  const ThreadPool& pool() const noexcept { return pool_; }
  const RessTrace& trace() const noexcept { return trace_; }
  std::uint64_t n_evals() const noexcept { return n_evals_; }
  /// Restores the evaluation counter when resuming from a checkpoint.
  void set_n_evals(std::uint64_t n) noexcept { n_evals_ = n; }
  const std::optional<MixtureProposal>& last_proposal() const noexcept { return proposal_; }

  WeightedSample initialize();

  /// Refits the proposal, redraws M particles and recomputes exact weights
  /// against [theta | y_{1:prefix}].
  void replenish(WeightedSample& sample);

  /// One ladder step, with replenishment or anneal rescue as needed.
  void advance(WeightedSample& sample);

  /// Tempered bridge from the current prefix to target_prefix.
  void anneal_rescue(WeightedSample& sample, std::size_t target_prefix);

  /// Resumes from `sample` (or initializes) and advances to n_total.
  WeightedSample run(std::optional<WeightedSample> start = std::nullopt);

  /// Default fitter used when none is set.
  MixtureProposal fit_proposal(const WeightedSample& sample, std::size_t K, Rng& rng) const;

 private:
  void record(EventKind kind, const WeightedSample& sample, double seconds, double temperature = 1.0);
  // Draws M particles from proposal and weights them against
  // log[y_{1:prefix}|theta] + t * log[y_{prefix+1:extra_to}|theta] + log prior + log|J|.
  // batch_ll receives the untempered extra batch log-likelihood.
  void redraw(WeightedSample& sample, const MixtureProposal& proposal, std::size_t extra_to,
              double temperature, Eigen::VectorXd* batch_ll);
  MixtureProposal build_proposal(const WeightedSample& sample, std::size_t K);
  // Refit-and-redraw with retries; targets the tempered bridge when extra_to > prefix.
  void replenish_impl(WeightedSample& sample, std::size_t extra_to, double temperature,
                      Eigen::VectorXd* batch_ll);
  // batch log-likelihoods from the current prefix to each candidate (M x C).
  Eigen::MatrixXd ladder(const WeightedSample& sample, const std::vector<std::size_t>& candidates);
  // ll holds each particle's batch log-likelihood up to target_prefix.
  void anneal_rescue_with(WeightedSample& sample, std::size_t target_prefix, Eigen::VectorXd ll);

  const Model& model_;
  EngineConfig config_;
  ThreadPool pool_;
  Initializer initializer_;
  Fitter fitter_;
  Observer observer_;
  RessTrace trace_;
  std::uint64_t n_evals_ = 0;
  std::uint64_t redraws_ = 0;
  std::optional<MixtureProposal> proposal_;
};

/// Model-space parameters and normalized weights; columns = parameter names + weight.
void write_posterior_csv(std::ostream& out, const Model& model, const WeightedSample& sample);

/// Sample and proposal for resuming a run.
struct Checkpoint {
  WeightedSample sample;
  std::optional<MixtureProposal> proposal;
  std::uint64_t n_evals = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace raisor
