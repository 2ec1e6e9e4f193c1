#include "mile/tuning.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mile/rng.hpp"

namespace mile {

void TuningConfig::validate() const {
  if (phase1_steps == 0 || phase2_steps == 0 || phase3_steps == 0)
    throw Error(ErrorKind::Config, "tuning phase step counts must be positive");
  if (!(ev_schedule_start >= ev_schedule_end) || !(ev_schedule_end > 0.0))
    throw Error(ErrorKind::Config, "energy-variance schedule must satisfy start >= end > 0");
  if (!(desired_ess_fraction > 0.0) || !(ess_floor > 0.0))
    throw Error(ErrorKind::Config, "ESS targets must be positive");
  if (!(trust_in_estimate > 0.0))
    throw Error(ErrorKind::Config, "trust_in_estimate must be positive");
  if (phase3_param_cap < 1 || phase3_sample_cap < 1)
    throw Error(ErrorKind::Config, "phase III caps must be >= 1");
  if (!(phase3_L_factor > 0.0) || !(step_size_ceiling > 0.0))
    throw Error(ErrorKind::Config, "phase3_L_factor and step_size_ceiling must be positive");
}

double TuningConfig::desired_ess(std::size_t retained_samples) const {
  return std::max(ess_floor, desired_ess_fraction * static_cast<double>(retained_samples));
}

double TuningConfig::resolved_eevpd_window(std::size_t retained_samples) const {
  return eevpd_window_samples > 0.0 ? eevpd_window_samples : desired_ess(retained_samples);
}

double energy_variance_target(std::size_t step, std::size_t total,
                              const TuningConfig& cfg) {
  if (total <= 1) return cfg.ev_schedule_start;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return cfg.ev_schedule_start + (cfg.ev_schedule_end - cfg.ev_schedule_start) * t;
}

double adapt_step_size(double step_size, double eevpd_estimate, double target,
                       double trust) {
  constexpr double kPerUpdateCap = 0.1;
  const double cap = trust * kPerUpdateCap;
  double log_change;
  if (eevpd_estimate > 0.0 && std::isfinite(eevpd_estimate))
    log_change = std::log(target / eevpd_estimate) / 6.0;
  else
    log_change = cap;  // no variance signal yet: grow
  log_change = std::clamp(log_change, -cap, cap);
  return step_size * std::exp(log_change);
}

void EevpdEstimator::update(double energy_change, std::size_t dim, double window) {
  if (!std::isfinite(energy_change)) return;
  ++count_;
  if (count_ == 1) {
    mean_ = energy_change;
    var_per_dim_ = 0.0;
    return;
  }
  const double w = window < 1.0 ? 1.0 : window;
  const double alpha = 1.0 / std::min(static_cast<double>(count_), w);
  const double dev = energy_change - mean_;
  var_per_dim_ = (1.0 - alpha) * var_per_dim_ + alpha * (dev * dev / static_cast<double>(dim));
  mean_ = (1.0 - alpha) * mean_ + alpha * energy_change;
}

namespace detail {

double RobustEevpdTracker::update(double energy_change, std::size_t dim, double target,
                                  double trust, double window) {
  // debiased log of the instantaneous EEVPD ratio: for dE ~ N(0, s^2),
  // E[log(dE^2)] = log(s^2) + psi(1/2) + log 2
  constexpr double kLogChiSqBias = 1.2703628454614782;
  constexpr double kLogClamp = 30.0;
  const double inst = energy_change * energy_change / static_cast<double>(dim);
  const double s = std::clamp(std::log(std::max(inst / target, 1e-300)) + kLogChiSqBias,
                              -kLogClamp, kLogClamp);
  const double z = s / (6.0 * trust);
  const double w = std::exp(-0.5 * z * z);
  // weight-denominated warmup: mass accumulates only from trusted samples, so
  // the tracker locks on quickly once the chain leaves the free-flight launch
  weight_sum_ = std::min(weight_sum_ + w, std::max(window, 1.0));
  const double alpha = weight_sum_ > 0.0 ? w / weight_sum_ : 1.0;
  log_ratio_ += alpha * (s - log_ratio_);
  return target * std::exp(log_ratio_);
}

}  // namespace detail

double phase1_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double initial_step_size, std::size_t retained_samples, Rng& rng,
                  TunedParams& out) {
  cfg.validate();
  if (!(initial_step_size > 0.0))
    throw Error(ErrorKind::Config, "initial step size must be positive");
  const std::size_t d = state.dim();
  const double burn_in_L = std::sqrt(static_cast<double>(d));
  const double window = cfg.resolved_eevpd_window(retained_samples);

  EevpdEstimator reporting;  // the achieved EEVPD, for reports and diagnostics
  detail::RobustEevpdTracker tracker;
  double eps = initial_step_size;
  std::size_t consecutive_halvings = 0;
  out.step_size_trace.reserve(out.step_size_trace.size() + cfg.phase1_steps);
  out.energy_change_trace.reserve(out.energy_change_trace.size() + cfg.phase1_steps);

  // flagged attempts do not consume a schedule slot: a finished phase I has
  // committed exactly phase1_steps steps no matter how many halvings occurred
  std::size_t committed = 0;
  while (committed < cfg.phase1_steps) {
    const StepInfo info = kernel_step(state, {eps, burn_in_L}, target, rng);
    if (!info.is_finite) {
      // kernel left the state untouched; retry more carefully
      eps *= 0.5;
      ++out.halving_events;
      if (++consecutive_halvings > 50)
        throw ChainFailed("step size collapsed: more than 50 consecutive halvings");
    } else {
      consecutive_halvings = 0;
      reporting.update(info.energy_change, d, window);
      const double target_ev = energy_variance_target(committed, cfg.phase1_steps, cfg);
      const double estimate =
          tracker.update(info.energy_change, d, target_ev, cfg.trust_in_estimate, window);
      eps = adapt_step_size(eps, estimate, target_ev, cfg.trust_in_estimate);
      if (eps > cfg.step_size_ceiling) eps = cfg.step_size_ceiling;
      out.energy_change_trace.push_back(info.energy_change);
      ++committed;
    }
    out.step_size_trace.push_back(eps);
  }
  out.final_eevpd = reporting.value();
  return eps;
}

double phase2_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double step_size, Rng& rng, TunedParams& out) {
  const std::size_t d = state.dim();
  const double burn_in_L = std::sqrt(static_cast<double>(d));
  std::vector<double> mean(d, 0.0), m2(d, 0.0);
  std::size_t n = 0;

  for (std::size_t step = 0; step < cfg.phase2_steps; ++step) {
    const StepInfo info = kernel_step(state, {step_size, burn_in_L}, target, rng);
    if (!info.is_finite) throw ChainFailed("non-finite step during phase II");
    out.energy_change_trace.push_back(info.energy_change);
    ++n;
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = state.position[i] - mean[i];
      mean[i] += delta / static_cast<double>(n);
      m2[i] += delta * (state.position[i] - mean[i]);
    }
  }

  double total_var = 0.0;
  if (n >= 2)
    for (std::size_t i = 0; i < d; ++i) total_var += m2[i] / static_cast<double>(n - 1);

  double initial_L;
  if (total_var > 0.0) {
    initial_L = std::sqrt(total_var);
  } else {
    initial_L = std::sqrt(static_cast<double>(d));
    out.variance_fallback = true;
  }
  out.initial_L = initial_L;
  return initial_L;
}

double phase3_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double step_size, double initial_L, std::size_t retained_samples,
                  Rng& rng, std::uint64_t chain_seed, TunedParams& out) {
  const std::size_t d = state.dim();

  std::vector<std::size_t> dims;
  if (d > cfg.phase3_param_cap) {
    Rng sub_rng(derive_seed(chain_seed, 0xD135ULL));
    std::vector<std::size_t> pool(d);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t k = 0; k < cfg.phase3_param_cap; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(uniform_below(sub_rng, d - k));
      std::swap(pool[k], pool[j]);
    }
    dims.assign(pool.begin(), pool.begin() + cfg.phase3_param_cap);
    std::sort(dims.begin(), dims.end());
  } else {
    dims.resize(d);
    std::iota(dims.begin(), dims.end(), std::size_t{0});
  }

  const std::size_t stride =
      (cfg.phase3_steps + cfg.phase3_sample_cap - 1) / cfg.phase3_sample_cap;
  const std::size_t rows = cfg.phase3_steps / stride;
  Matrix trace(rows, dims.size());
  out.phase3_dims_used = dims.size();
  out.phase3_rows_used = rows;

  std::size_t r = 0;
  for (std::size_t step = 1; step <= cfg.phase3_steps; ++step) {
    const StepInfo info = kernel_step(state, {step_size, initial_L}, target, rng);
    if (!info.is_finite) throw ChainFailed("non-finite step during phase III");
    out.energy_change_trace.push_back(info.energy_change);
    if (step % stride == 0 && r < rows) {
      for (std::size_t j = 0; j < dims.size(); ++j) trace(r, j) = state.position[dims[j]];
      ++r;
    }
  }

  double refined_L = initial_L;
  bool have_ess = false;
  double mean_ess = 0.0;
  if (rows >= 8) {
    try {
      const EssResult res = ess_per_dimension(trace);
      double sum = 0.0;
      for (double e : res.ess) sum += e;
      mean_ess = sum / static_cast<double>(res.ess.size());
      have_ess = true;
    } catch (const std::exception&) {
      have_ess = false;
    }
  }

  if (have_ess && mean_ess > 0.0) {
    refined_L =
        refine_decoherence_length(mean_ess, step_size, initial_L, cfg, retained_samples);
  } else {
    out.ess_fallback = true;
  }
  return refined_L;
}

double refine_decoherence_length(double mean_ess, double step_size, double initial_L,
                                 const TuningConfig& cfg,
                                 std::size_t retained_samples) {
  const double guard = cfg.desired_ess(retained_samples);
  const double tau = static_cast<double>(cfg.phase3_steps) / std::max(mean_ess, guard);
  return std::clamp(cfg.phase3_L_factor * step_size * tau, 0.1 * initial_L,
                    10.0 * initial_L);
}

TunedParams tune_chain(ChainState& state, Target& target, const TuningConfig& cfg,
                       double initial_step_size, std::size_t retained_samples,
                       Rng& rng, std::uint64_t chain_seed) {
  TunedParams out;
  const double eps =
      phase1_run(state, target, cfg, initial_step_size, retained_samples, rng, out);
  const double initial_L = phase2_run(state, target, cfg, eps, rng, out);
  const double refined_L = phase3_run(state, target, cfg, eps, initial_L,
                                      retained_samples, rng, chain_seed, out);
  out.step_size = eps;
  out.decoherence_length = refined_L;
  return out;
}

namespace detail {

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw Error(ErrorKind::Run, "FFT size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  constexpr double kTwoPi = 6.283185307179586477;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? kTwoPi : -kTwoPi) / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

namespace {

// Geyer initial-positive-sequence truncation on the raw autocovariances.
double tau_from_autocov(const double* acov, std::size_t steps, bool& degenerate) {
  const double c0 = acov[0];
  if (!(c0 > 0.0)) {
    degenerate = true;
    return 1.0;  // constant trace: zero autocorrelation by convention
  }
  degenerate = false;
  double pair_sum = 0.0;
  for (std::size_t k = 0;; ++k) {
    const std::size_t t1 = 2 * k;
    const std::size_t t2 = 2 * k + 1;
    if (t1 >= steps) break;
    const double g =
        acov[t1] / c0 + (t2 < steps ? acov[t2] / c0 : 0.0);
    if (g <= 0.0) break;
    pair_sum += g;
  }
  double tau = 2.0 * pair_sum - 1.0;
  if (tau < 1.0) tau = 1.0;
  return tau;
}

}  // namespace

double integrated_autocorrelation_time(std::span<const double> series) {
  Matrix trace(series.size(), 1);
  for (std::size_t i = 0; i < series.size(); ++i) trace(i, 0) = series[i];
  const EssResult res = ess_per_dimension(trace);
  return static_cast<double>(series.size()) / res.ess[0];
}

}  // namespace detail

EssResult ess_per_dimension(const Matrix& trace) {
  const std::size_t steps = trace.rows;
  const std::size_t dims = trace.cols;
  if (steps < 8) throw Error(ErrorKind::Run, "ESS needs at least 8 steps");
  if (dims == 0) throw Error(ErrorKind::Run, "ESS needs at least one dimension");

  std::size_t nfft = 1;
  while (nfft < 2 * steps) nfft <<= 1;

  EssResult result;
  result.ess.resize(dims);
  result.degenerate.assign(dims, 0);

  // two real series are packed into one complex FFT
  const std::size_t npairs = (dims + 1) / 2;
  const bool par = npairs > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t p = 0; p < npairs; ++p) {
    const std::size_t da = 2 * p;
    const std::size_t db = 2 * p + 1;
    const bool has_b = db < dims;

    thread_local std::vector<std::complex<double>> buf, spec;
    thread_local std::vector<double> acov_a, acov_b;
    buf.assign(nfft, {0.0, 0.0});
    spec.assign(nfft, {0.0, 0.0});

    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      mean_a += trace(t, da);
      if (has_b) mean_b += trace(t, db);
    }
    mean_a /= static_cast<double>(steps);
    if (has_b) mean_b /= static_cast<double>(steps);

    for (std::size_t t = 0; t < steps; ++t)
      buf[t] = {trace(t, da) - mean_a, has_b ? trace(t, db) - mean_b : 0.0};

    detail::fft_radix2(buf, false);

    // unscramble the two channels and pack their power spectra
    for (std::size_t k = 0; k < nfft; ++k) {
      const std::complex<double> zk = buf[k];
      const std::complex<double> zr = std::conj(buf[(nfft - k) % nfft]);
      const std::complex<double> ak = 0.5 * (zk + zr);
      const std::complex<double> bk = std::complex<double>(0.0, -0.5) * (zk - zr);
      spec[k] = {std::norm(ak), std::norm(bk)};
    }
    detail::fft_radix2(spec, true);

    acov_a.resize(steps);
    acov_b.resize(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      acov_a[t] = spec[t].real();
      acov_b[t] = spec[t].imag();
    }

    bool degen = false;
    double tau = detail::tau_from_autocov(acov_a.data(), steps, degen);
    result.ess[da] = static_cast<double>(steps) / tau;
    result.degenerate[da] = degen ? 1 : 0;
    if (has_b) {
      tau = detail::tau_from_autocov(acov_b.data(), steps, degen);
      result.ess[db] = static_cast<double>(steps) / tau;
      result.degenerate[db] = degen ? 1 : 0;
    }
  }
  return result;
}

}  // namespace mile
