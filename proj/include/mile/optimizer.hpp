#pragma once

#include <cstdint>
#include <vector>

#include "mile/posterior.hpp"

namespace mile {

struct TrainConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t max_epochs = 1000;
  std::size_t patience = 20;
  int ensemble_size = 12;
  // full-batch below this many training rows; above it, fixed minibatches of
  // 1024 with a deterministic per-epoch reshuffle
  std::size_t minibatch_threshold = 50000;
  std::size_t minibatch_size = 1024;

  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct DeepEnsemble {
  std::vector<ParamVector> members;
  std::vector<double> validation_nll;       // best validation mean NLL per member
  std::vector<std::uint64_t> member_seeds;  // training seed, travels with the member
  double learning_rate = 0.0;               // carried into step-size initialization

  int size() const { return static_cast<int>(members.size()); }
};

/// Adam moment state for one parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;

  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

/// One AdamW update: bias-corrected Adam moments plus decoupled weight decay
/// theta -= lr * wd * theta applied separately from the adaptive step.
/// Throws on a non-finite gradient.
void adamw_step(ParamVector& params, AdamState& state, const ParamVector& grad,
                const TrainConfig& cfg);

struct TrainStats {
  std::size_t epochs_run = 0;
  double best_validation_nll = 0.0;
};

/// Trains one member by minimizing the mean negative log likelihood on the
/// training split, with early stopping on validation mean NLL. Returns the
/// parameters that achieved the best validation NLL (the He-uniform init
/// counts as the baseline). Deterministic given the seed.
ParamVector train_member(const PosteriorModel& model, const Dataset& val_data,
                         const TrainConfig& cfg, std::uint64_t seed,
                         TrainStats* stats = nullptr);

/// K members trained with seeds base_seed + k; members run in parallel but the
/// result is identical for any worker count.
DeepEnsemble train_ensemble(const PosteriorModel& model, const Dataset& val_data,
                            const TrainConfig& cfg, std::uint64_t base_seed);

/// Mean negative log likelihood of `data` under `params` (the early-stopping
/// metric).
double mean_nll(const PosteriorModel& model, const Dataset& data,
                const ParamVector& params);

}  // namespace mile
