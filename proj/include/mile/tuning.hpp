#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "mile/common.hpp"
#include "mile/mclmc.hpp"

namespace mile {

struct TuningConfig {
  std::size_t phase1_steps = 40000;
  std::size_t phase2_steps = 5000;
  std::size_t phase3_steps = 5000;
  double ev_schedule_start = 0.5;
  double ev_schedule_end = 0.1;
  double desired_ess_fraction = 0.1;
  double ess_floor = 100.0;
  // <= 0 derives the window from the desired effective sample size
  double eevpd_window_samples = 150.0;
  double trust_in_estimate = 1.5;
  std::size_t phase3_param_cap = 2000;
  std::size_t phase3_sample_cap = 10000;
  double phase3_L_factor = 0.4;
  double step_size_ceiling = 1e6;

  void validate() const;

  /// ESS level the tuner aims for: a fraction of the retained posterior
  /// samples, never below the floor.
  double desired_ess(std::size_t retained_samples) const;
  double resolved_eevpd_window(std::size_t retained_samples) const;

  bool operator==(const TuningConfig&) const = default;
};

/// Tuner output plus the traces and flags the per-chain report is built from.
struct TunedParams {
  double step_size = 0.0;
  double decoherence_length = 0.0;
  double initial_L = 0.0;  // phase-II estimate before refinement
  std::vector<double> energy_change_trace;
  std::vector<double> step_size_trace;
  std::size_t halving_events = 0;
  bool variance_fallback = false;  // frozen chain in phase II
  bool ess_fallback = false;       // ESS estimation failed in phase III
  double final_eevpd = 0.0;
  std::size_t phase3_dims_used = 0;  // after the subsampling cap
  std::size_t phase3_rows_used = 0;  // after thinning to the sample cap
};

/// Raised when a chain cannot continue (runaway halving, frozen state, ...).
struct ChainFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear interpolation from ev_schedule_start at step 0 to ev_schedule_end at
/// step total-1.
double energy_variance_target(std::size_t step, std::size_t total,
                              const TuningConfig& cfg);

/// Multiplicative step-size update eps * (target/eevpd)^(1/6); the energy-error
/// variance of the second-order integrator scales as eps^6. The log-change is
/// clamped to +-trust * 0.1 per update.
double adapt_step_size(double step_size, double eevpd_estimate, double target,
                       double trust);

/// Exponentially weighted mean/variance of the per-step energy change,
/// reported per dimension. The first `window` updates use the cumulative
/// average so early estimates are unbiased.
class EevpdEstimator {
 public:
  void update(double energy_change, std::size_t dim, double window);
  double value() const { return var_per_dim_; }
  std::size_t count() const { return count_; }

 private:
  double mean_ = 0.0;
  double var_per_dim_ = 0.0;
  std::size_t count_ = 0;
};

namespace detail {

/// The adaptation-path EEVPD tracker. Tracks log(Var(dE)/d / target) as a
/// weighted moving average of debiased instantaneous samples; samples far from
/// the target are down-weighted by exp(-0.5 (s / (6 trust))^2), which is what
/// keeps the per-step step-size feedback loop from ringing. The plain
/// EevpdEstimator above stays the reporting-path measurement.
class RobustEevpdTracker {
 public:
  /// Adds one energy-change sample against `target` and returns the tracked
  /// EEVPD estimate (in absolute units) to feed the step-size update.
  double update(double energy_change, std::size_t dim, double target, double trust,
                double window);

 private:
  double log_ratio_ = 0.0;
  double weight_sum_ = 0.0;
};

}  // namespace detail

/// Phase I: adapt the step size against the scheduled EEVPD target and finish
/// burn-in. L is held at sqrt(d). Non-finite steps halve eps and roll back;
/// more than 50 consecutive halvings fail the chain. Returns the final eps.
double phase1_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double initial_step_size, std::size_t retained_samples, Rng& rng,
                  TunedParams& out);

/// Phase II: run at the tuned eps and estimate L0 = sqrt(sum_i Var[theta_i])
/// from streaming per-coordinate variances. A frozen chain falls back to sqrt(d).
double phase2_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double step_size, Rng& rng, TunedParams& out);

/// Phase III: refine L from the FFT autocorrelation of the phase trace, with
/// dimension subsampling above phase3_param_cap and thinning so at most
/// phase3_sample_cap rows enter the FFT. The result is clamped to
/// [0.1 L0, 10 L0].
double phase3_run(ChainState& state, Target& target, const TuningConfig& cfg,
                  double step_size, double initial_L, std::size_t retained_samples,
                  Rng& rng, std::uint64_t chain_seed, TunedParams& out);

/// L = phase3_L_factor * eps * tau with tau = phase3_steps / max(mean ESS,
/// desired ESS), clamped to [0.1 L0, 10 L0].
double refine_decoherence_length(double mean_ess, double step_size, double initial_L,
                                 const TuningConfig& cfg,
                                 std::size_t retained_samples);

/// All three phases in order.
TunedParams tune_chain(ChainState& state, Target& target, const TuningConfig& cfg,
                       double initial_step_size, std::size_t retained_samples,
                       Rng& rng, std::uint64_t chain_seed);

struct EssResult {
  std::vector<double> ess;                // per dimension, in (0, steps]
  std::vector<std::uint8_t> degenerate;   // constant-trace convention flag
};

/// Per-dimension effective sample size of a steps x dims trace: FFT
/// autocovariance, Geyer initial-positive-sequence truncation,
/// ESS = steps / (1 + 2 sum rho_t). Constant traces report ESS = steps and are
/// flagged. Requires >= 8 steps.
EssResult ess_per_dimension(const Matrix& trace);

namespace detail {

/// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);

/// Integrated autocorrelation time of a single series (helper for tests).
double integrated_autocorrelation_time(std::span<const double> series);

}  // namespace detail

}  // namespace mile
