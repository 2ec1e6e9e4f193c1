#include "mile/optimizer.hpp"

#include <omp.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "mile/rng.hpp"

namespace mile {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
    throw Error(ErrorKind::Config, "Adam betas must lie in (0, 1)");
  if (!(eps > 0.0)) throw Error(ErrorKind::Config, "Adam eps must be > 0");
  if (weight_decay < 0.0) throw Error(ErrorKind::Config, "weight_decay must be >= 0");
  if (max_epochs == 0) throw Error(ErrorKind::Config, "max_epochs must be >= 1");
  if (patience == 0) throw Error(ErrorKind::Config, "patience must be >= 1");
  if (ensemble_size < 1) throw Error(ErrorKind::Config, "ensemble_size must be >= 1");
  if (minibatch_size == 0) throw Error(ErrorKind::Config, "minibatch_size must be >= 1");
}

void adamw_step(ParamVector& params, AdamState& state, const ParamVector& grad,
                const TrainConfig& cfg) {
  const std::size_t d = params.size();
  if (grad.size() != d || state.m.size() != d)
    throw Error(ErrorKind::Run, "adamw_step: dimension mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw Error(ErrorKind::Run, "adamw_step: non-finite gradient");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const double decay = cfg.learning_rate * cfg.weight_decay;
  for (std::size_t i = 0; i < d; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    // decoupled decay acts on the pre-step value, separate from the adaptive step
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps) + decay * params[i];
  }
}

double mean_nll(const PosteriorModel& model, const Dataset& data,
                const ParamVector& params) {
  NnWorkspace ws;
  const double ll = loglik_value(model.arch, model.likelihood, data, params, ws);
  return -ll / static_cast<double>(data.size());
}

namespace {

Dataset gather_rows(const Dataset& data, const std::vector<std::size_t>& idx,
                    std::size_t begin, std::size_t end) {
  Dataset batch;
  batch.x = Matrix(end - begin, data.x.cols);
  const bool regression = !data.y_real.empty();
  if (regression) batch.y_real.resize(end - begin);
  if (!data.y_class.empty()) batch.y_class.resize(end - begin);
  for (std::size_t r = begin; r < end; ++r) {
    const std::size_t src = idx[r];
    double* dst = batch.x.row(r - begin);
    const double* s = data.x.row(src);
    for (std::size_t c = 0; c < data.x.cols; ++c) dst[c] = s[c];
    if (regression) batch.y_real[r - begin] = data.y_real[src];
    if (!data.y_class.empty()) batch.y_class[r - begin] = data.y_class[src];
  }
  return batch;
}

}  // namespace

ParamVector train_member(const PosteriorModel& model, const Dataset& val_data,
                         const TrainConfig& cfg, std::uint64_t seed, TrainStats* stats) {
  cfg.validate();
  model.validate();

  ParamVector params = init_params(model.arch, seed);
  AdamState adam(params.size());
  NnWorkspace ws;
  ParamVector grad(params.size());

  const std::size_t n_train = model.train.size();
  const bool minibatch = n_train > cfg.minibatch_threshold;
  Rng shuffle_rng(derive_seed(seed, 0x548FF1EULL));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_val = mean_nll(model, val_data, params);
  ParamVector best_params = params;
  std::size_t epochs_since_best = 0;
  std::size_t epochs_run = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (minibatch) {
      shuffle(shuffle_rng, order);
      for (std::size_t b0 = 0; b0 < n_train; b0 += cfg.minibatch_size) {
        const std::size_t b1 = std::min(b0 + cfg.minibatch_size, n_train);
        const Dataset batch = gather_rows(model.train, order, b0, b1);
        const double ll =
            loglik_and_param_grad(model.arch, model.likelihood, batch, params, ws, grad);
        if (!std::isfinite(ll))
          throw Error(ErrorKind::Run, "training loss diverged to a non-finite value");
        const double scale = -1.0 / static_cast<double>(batch.size());
        for (double& g : grad) g *= scale;
        adamw_step(params, adam, grad, cfg);
      }
    } else {
      const double ll = loglik_and_param_grad(model.arch, model.likelihood, model.train,
                                              params, ws, grad);
      if (!std::isfinite(ll))
        throw Error(ErrorKind::Run, "training loss diverged to a non-finite value");
      const double scale = -1.0 / static_cast<double>(n_train);
      for (double& g : grad) g *= scale;
      adamw_step(params, adam, grad, cfg);
    }

    ++epochs_run;
    const double val = mean_nll(model, val_data, params);
    if (!std::isfinite(val))
      throw Error(ErrorKind::Run, "validation loss diverged to a non-finite value");
    if (val < best_val) {
      best_val = val;
      best_params = params;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }
  if (stats) {
    stats->epochs_run = epochs_run;
    stats->best_validation_nll = best_val;
  }
  return best_params;
}

DeepEnsemble train_ensemble(const PosteriorModel& model, const Dataset& val_data,
                            const TrainConfig& cfg, std::uint64_t base_seed) {
  cfg.validate();
  const int k = cfg.ensemble_size;
  DeepEnsemble ensemble;
  ensemble.members.resize(k);
  ensemble.validation_nll.resize(k);
  ensemble.member_seeds.resize(k);
  for (int i = 0; i < k; ++i) ensemble.member_seeds[i] = base_seed + i;
  ensemble.learning_rate = cfg.learning_rate;

  std::vector<std::string> failures(k);
  const bool par = k > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic, 1) if (par) num_threads(max_workers())
  for (int i = 0; i < k; ++i) {
    try {
      ensemble.members[i] = train_member(model, val_data, cfg, base_seed + i);
      ensemble.validation_nll[i] = mean_nll(model, val_data, ensemble.members[i]);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (int i = 0; i < k; ++i)
    if (!failures[i].empty()) {
      std::ostringstream msg;
      msg << "ensemble member " << i << " failed: " << failures[i];
      throw Error(ErrorKind::Run, msg.str());
    }
  return ensemble;
}

}  // namespace mile
