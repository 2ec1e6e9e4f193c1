#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mile/optimizer.hpp"
#include "mile/posterior.hpp"
#include "mile/tuning.hpp"

namespace mile {

struct RunConfig {
  int chains = 12;
  std::size_t sampling_steps = 10000;
  std::size_t thinning_interval = 10;
  TuningConfig tuning;
  TrainConfig training;
  std::uint64_t base_seed = 0;

  std::size_t retained_samples() const { return sampling_steps / thinning_interval; }
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

struct ChainReport {
  int chain_id = 0;
  bool failed = false;
  std::string failure_reason;
  double step_size = 0.0;
  double decoherence_length = 0.0;
  double initial_L = 0.0;
  double final_eevpd = 0.0;
  std::size_t halving_events = 0;
  std::size_t steps_executed = 0;   // committed kernel steps (tuning + sampling)
  std::size_t retained_samples = 0;
  std::uint64_t gradient_evals = 0;           // every target evaluation
  std::uint64_t setup_gradient_evals = 0;     // initial cache fill
  std::uint64_t recovery_gradient_evals = 0;  // burned by flagged steps
  double wallclock_seconds = 0.0;  // volatile; never persisted in sample files

  /// The fixed sampling budget: 2 evaluations per committed step.
  std::uint64_t budget_gradient_evals() const {
    return gradient_evals - setup_gradient_evals - recovery_gradient_evals;
  }
};

/// K chains x S thinned samples x d parameters plus per-chain reports.
struct PosteriorSamples {
  std::size_t num_chains = 0;
  std::size_t samples_per_chain = 0;
  std::size_t dim = 0;
  std::size_t thinning = 0;
  std::uint64_t base_seed = 0;
  std::vector<int> arch_widths;  // empty for non-BNN targets
  std::vector<double> data;      // (chain, sample, parameter) order
  std::vector<ChainReport> reports;
  std::vector<TunedParams> tuned;  // in-memory only, not persisted

  std::span<const double> chain_sample(std::size_t k, std::size_t s) const {
    return {data.data() + (k * samples_per_chain + s) * dim, dim};
  }
  double* chain_sample_mut(std::size_t k, std::size_t s) {
    return data.data() + (k * samples_per_chain + s) * dim;
  }
  std::size_t successful_chains() const;
};

struct ChainResult {
  std::vector<double> samples;  // retained x dim, row-major
  ChainReport report;
  TunedParams tuned;
};

/// Full single-chain pipeline on an arbitrary target: three-phase tuning from
/// the warm start with eps initialized to `initial_step_size`, then
/// sampling_steps kernel steps at the tuned parameters, retaining every
/// thinning_interval-th position. Deterministic given chain_seed.
ChainResult run_chain(std::span<const double> warm_start, Target& target,
                      const RunConfig& cfg, std::uint64_t chain_seed,
                      double initial_step_size);

/// Runs K independent chains started at the ensemble members. Chain k uses the
/// seed derive_seed(base_seed, k); results are merged in chain order and are
/// identical for any worker count. Throws Error(AllChainsFailed) if no chain
/// survives.
PosteriorSamples run_ensemble(const DeepEnsemble& ensemble, const PosteriorModel& model,
                              const RunConfig& cfg);

struct PredictOptions {
  std::vector<double> coverage_levels;  // empty: skip intervals
  std::uint64_t interval_seed = 0;
};

struct PredictiveSummary {
  std::vector<double> log_density;       // per test point; empty without targets
  std::vector<double> point_prediction;  // regression: mixture mean of locations
  Matrix class_probabilities;            // classification: mixture class probs
  std::vector<int> predicted_class;      // argmax, ties to the lowest index
  std::vector<double> levels;
  Matrix interval_lower;  // n_test x levels, equal-tailed
  Matrix interval_upper;
};

/// Posterior predictive summary over the test inputs. Only successful chains
/// contribute. Intervals take one predictive draw per posterior sample per
/// point, seeded per point, then equal-tailed empirical quantiles.
PredictiveSummary predict(const PosteriorModel& model, const PosteriorSamples& samples,
                          const Matrix& x, const Dataset* targets,
                          const PredictOptions& opts);

/// Mixture log density log(mean(exp(log_densities))) evaluated stably.
double mixture_log_density(std::span<const double> log_densities);

/// Wraps ensemble members as a K x 1 posterior (the deep-ensemble baseline).
PosteriorSamples ensemble_as_samples(const DeepEnsemble& ensemble,
                                     const MlpArchitecture& arch);

}  // namespace mile
