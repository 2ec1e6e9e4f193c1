#include "mile/ensemble.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "mile/mclmc.hpp"
#include "mile/metrics.hpp"
#include "mile/rng.hpp"

namespace mile {

void RunConfig::validate() const {
  if (chains < 1) throw Error(ErrorKind::Config, "chains must be >= 1");
  if (sampling_steps == 0 || thinning_interval == 0)
    throw Error(ErrorKind::Config, "sampling_steps and thinning_interval must be >= 1");
  if (sampling_steps % thinning_interval != 0)
    throw Error(ErrorKind::Config, "sampling_steps must be divisible by thinning_interval");
  tuning.validate();
  training.validate();
}

std::size_t PosteriorSamples::successful_chains() const {
  std::size_t n = 0;
  for (const auto& r : reports)
    if (!r.failed) ++n;
  return n;
}

ChainResult run_chain(std::span<const double> warm_start, Target& target,
                      const RunConfig& cfg, std::uint64_t chain_seed,
                      double initial_step_size) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t d = target.dim();
  const std::size_t retained_cap = cfg.retained_samples();

  ChainResult res;
  CountingTarget counting(target);
  Rng rng(chain_seed);

  auto finish = [&](ChainReport& report) {
    report.gradient_evals = counting.count();
    report.recovery_gradient_evals =
        report.gradient_evals - report.setup_gradient_evals - 2 * report.steps_executed;
    report.wallclock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  ChainState state = make_chain_state(
      counting, std::vector<double>(warm_start.begin(), warm_start.end()), rng);
  res.report.setup_gradient_evals = counting.count();
  if (!std::isfinite(state.logdensity)) {
    res.report.failed = true;
    res.report.failure_reason = "non-finite log density at the warm start";
    finish(res.report);
    return res;
  }

  try {
    const double eps = phase1_run(state, counting, cfg.tuning, initial_step_size,
                                  retained_cap, rng, res.tuned);
    const double initial_L = phase2_run(state, counting, cfg.tuning, eps, rng, res.tuned);
    const double refined_L = phase3_run(state, counting, cfg.tuning, eps, initial_L,
                                        retained_cap, rng, chain_seed, res.tuned);
    res.tuned.step_size = eps;
    res.tuned.decoherence_length = refined_L;
  } catch (const ChainFailed& e) {
    res.report.failed = true;
    res.report.failure_reason = e.what();
    res.report.steps_executed = res.tuned.energy_change_trace.size();
    res.report.halving_events = res.tuned.halving_events;
    finish(res.report);
    return res;
  }

  res.report.step_size = res.tuned.step_size;
  res.report.decoherence_length = res.tuned.decoherence_length;
  res.report.initial_L = res.tuned.initial_L;
  res.report.final_eevpd = res.tuned.final_eevpd;
  res.report.halving_events = res.tuned.halving_events;

  // fixed-budget sampling at the tuned kernel parameters
  const KernelParams kernel{res.tuned.step_size, res.tuned.decoherence_length};
  res.samples.assign(retained_cap * d, 0.0);
  std::size_t committed = res.tuned.energy_change_trace.size();
  std::size_t retained = 0;
  for (std::size_t step = 1; step <= cfg.sampling_steps; ++step) {
    const StepInfo info = kernel_step(state, kernel, counting, rng);
    if (!info.is_finite) {
      // the retained prefix stays available for diagnosis
      res.report.failed = true;
      std::ostringstream msg;
      msg << "non-finite state at sampling step " << step;
      res.report.failure_reason = msg.str();
      break;
    }
    ++committed;
    if (step % cfg.thinning_interval == 0) {
      double* dst = res.samples.data() + retained * d;
      for (std::size_t i = 0; i < d; ++i) dst[i] = state.position[i];
      ++retained;
    }
  }
  res.report.steps_executed = committed;
  res.report.retained_samples = retained;
  finish(res.report);
  return res;
}

PosteriorSamples run_ensemble(const DeepEnsemble& ensemble, const PosteriorModel& model,
                              const RunConfig& cfg) {
  cfg.validate();
  model.validate();
  if (ensemble.size() != cfg.chains)
    throw Error(ErrorKind::Config, "ensemble size does not match configured chain count");

  const std::size_t k = static_cast<std::size_t>(cfg.chains);
  const std::size_t s = cfg.retained_samples();
  const std::size_t d = model.arch.param_count();

  PosteriorSamples out;
  out.num_chains = k;
  out.samples_per_chain = s;
  out.dim = d;
  out.thinning = cfg.thinning_interval;
  out.base_seed = cfg.base_seed;
  out.arch_widths = model.arch.layer_widths;
  out.data.assign(k * s * d, 0.0);
  out.reports.resize(k);
  out.tuned.resize(k);

  const bool par = k > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic, 1) if (par) num_threads(max_workers())
  for (std::size_t i = 0; i < k; ++i) {
    PosteriorTarget target(model);
    // the chain seed travels with the member, so reordering members reorders
    // chain outputs without changing them
    const std::uint64_t chain_seed =
        derive_seed(ensemble.member_seeds.empty() ? cfg.base_seed + i
                                                  : ensemble.member_seeds[i],
                    0xC4A15ULL);
    ChainResult res =
        run_chain(ensemble.members[i], target, cfg, chain_seed, ensemble.learning_rate);
    res.report.chain_id = static_cast<int>(i);
    std::copy(res.samples.begin(), res.samples.end(), out.data.begin() + i * s * d);
    out.reports[i] = std::move(res.report);
    out.tuned[i] = std::move(res.tuned);
  }

  if (out.successful_chains() == 0)
    throw Error(ErrorKind::AllChainsFailed, "all chains failed; see chain reports");
  return out;
}

double mixture_log_density(std::span<const double> log_densities) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_densities) mx = v > mx ? v : mx;
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double v : log_densities) sum += std::exp(v - mx);
  return mx + std::log(sum) - std::log(static_cast<double>(log_densities.size()));
}

PredictiveSummary predict(const PosteriorModel& model, const PosteriorSamples& samples,
                          const Matrix& x, const Dataset* targets,
                          const PredictOptions& opts) {
  model.validate();
  if (x.cols != static_cast<std::size_t>(model.arch.input_dim()))
    throw Error(ErrorKind::Run, "predict: feature width mismatch");
  if (samples.successful_chains() == 0)
    throw Error(ErrorKind::AllChainsFailed, "predict: no successful chains");

  const bool regression =
      model.likelihood.kind == LikelihoodKind::GaussianDistributional;
  const std::size_t n = x.rows;
  const std::size_t total = samples.successful_chains() * samples.samples_per_chain;
  const bool want_intervals = regression && !opts.coverage_levels.empty();
  const bool want_logdens = targets != nullptr;

  PredictiveSummary out;
  out.point_prediction.assign(n, 0.0);
  if (want_logdens) out.log_density.assign(n, 0.0);
  if (!regression) {
    out.class_probabilities = Matrix(n, model.likelihood.num_classes);
    out.predicted_class.assign(n, 0);
  }
  if (want_intervals) {
    out.levels = opts.coverage_levels;
    out.interval_lower = Matrix(n, out.levels.size());
    out.interval_upper = Matrix(n, out.levels.size());
  }

  const auto m = static_cast<std::size_t>(model.arch.output_dim());
  const std::size_t acts_n = model.arch.activation_count();
  const std::size_t last = acts_n - m;

  const bool par = n > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t i = 0; i < n; ++i) {
    thread_local std::vector<double> acts, logdens, draws, probs;
    acts.resize(acts_n);
    if (want_logdens) logdens.resize(total);
    if (want_intervals) draws.resize(total);
    if (!regression) probs.assign(m, 0.0);

    Rng draw_rng(derive_seed(opts.interval_seed, i));
    double location_sum = 0.0;
    std::size_t j = 0;
    for (std::size_t k = 0; k < samples.num_chains; ++k) {
      if (samples.reports[k].failed) continue;
      for (std::size_t sidx = 0; sidx < samples.samples_per_chain; ++sidx) {
        const auto theta = samples.chain_sample(k, sidx);
        detail::forward_row(model.arch, theta.data(), x.row(i), acts.data());
        const double* outrow = acts.data() + last;
        if (regression) {
          const double mu = outrow[0];
          const double s = std::clamp(outrow[1], -kLogScaleClamp, kLogScaleClamp);
          location_sum += mu;
          if (want_logdens)
            logdens[j] = detail::likelihood_row(model.likelihood, outrow,
                                                targets->y_real[i], 0, nullptr);
          if (want_intervals) draws[j] = mu + std::exp(s) * standard_normal(draw_rng);
        } else {
          // mixture of per-sample softmax probabilities, accumulated in fixed order
          double mx = outrow[0];
          for (std::size_t c = 1; c < m; ++c) mx = outrow[c] > mx ? outrow[c] : mx;
          double sum = 0.0;
          for (std::size_t c = 0; c < m; ++c) sum += std::exp(outrow[c] - mx);
          const double lse = mx + std::log(sum);
          for (std::size_t c = 0; c < m; ++c) probs[c] += std::exp(outrow[c] - lse);
          if (want_logdens) logdens[j] = outrow[targets->y_class[i]] - lse;
        }
        ++j;
      }
    }

    if (regression) {
      out.point_prediction[i] = location_sum / static_cast<double>(total);
      if (want_intervals) {
        std::sort(draws.begin(), draws.end());
        for (std::size_t l = 0; l < out.levels.size(); ++l) {
          const auto [lo, hi] = equal_tailed_interval(draws, out.levels[l]);
          out.interval_lower(i, l) = lo;
          out.interval_upper(i, l) = hi;
        }
      }
    } else {
      int best = 0;
      for (std::size_t c = 0; c < m; ++c) {
        probs[c] /= static_cast<double>(total);
        out.class_probabilities(i, c) = probs[c];
        if (probs[c] > probs[best]) best = static_cast<int>(c);
      }
      out.predicted_class[i] = best;
      out.point_prediction[i] = static_cast<double>(best);
    }
    if (want_logdens) out.log_density[i] = mixture_log_density(logdens);
  }
  return out;
}

PosteriorSamples ensemble_as_samples(const DeepEnsemble& ensemble,
                                     const MlpArchitecture& arch) {
  PosteriorSamples out;
  out.num_chains = static_cast<std::size_t>(ensemble.size());
  out.samples_per_chain = 1;
  out.dim = arch.param_count();
  out.thinning = 1;
  out.arch_widths = arch.layer_widths;
  out.data.resize(out.num_chains * out.dim);
  out.reports.resize(out.num_chains);
  for (std::size_t k = 0; k < out.num_chains; ++k) {
    out.reports[k].chain_id = static_cast<int>(k);
    out.reports[k].retained_samples = 1;
    std::copy(ensemble.members[k].begin(), ensemble.members[k].end(),
              out.data.begin() + k * out.dim);
  }
  return out;
}

}  // namespace mile
