#pragma once

#include <span>
#include <vector>

#include "mile/rng.hpp"
#include "mile/targets.hpp"

namespace mile {

/// One sampler chain: position, unit velocity, and the cached density/gradient
/// at the position.
struct ChainState {
  std::vector<double> position;
  std::vector<double> velocity;
  double logdensity = 0.0;
  std::vector<double> gradient;

  std::size_t dim() const { return position.size(); }
};

struct KernelParams {
  double step_size = 0.0;
  double decoherence_length = 0.0;
};

struct StepInfo {
  double energy_change = 0.0;
  bool is_finite = true;
};

// Second-order minimal-norm splitting coefficient.
inline constexpr double kMinimalNormLambda = 0.1931833275037836;

/// Random unit velocity plus the initial density/gradient evaluation
/// (one target call, accounted as setup by the chain runner).
ChainState make_chain_state(Target& target, std::vector<double> position, Rng& rng);

/// Exact solution of the isokinetic drift du = (I - uu^T) g dt/(d-1) over dt.
/// Updates u in place and returns the kinetic-energy change
/// (d-1) log(cosh(delta) + <e,u> sinh(delta)) with delta = dt |g|/(d-1).
/// Zero gradient leaves u unchanged and returns 0.
double velocity_drift_update(std::span<double> u, std::span<const double> grad,
                             double delta_t, std::size_t dim);

/// Minimal-norm integrator step: velocity and position sub-updates with
/// coefficients (lambda e, e/2, (1-2 lambda) e, e/2, lambda e). The first
/// velocity update reuses the cached gradient; exactly two fresh gradient
/// evaluations occur. On any non-finite intermediate the state is left
/// untouched and the step is flagged.
StepInfo mn2_step(ChainState& state, double step_size, Target& target);

/// Partial momentum refresh u' = (u + nu z)/|u + nu z| with
/// nu = sqrt((exp(2 eps/L) - 1)/d). Always renormalizes.
void partial_refresh(std::span<double> u, double step_size, double decoherence_length,
                     Rng& rng);

/// mn2_step followed by the refresh; the refresh is skipped on a flagged step.
StepInfo kernel_step(ChainState& state, const KernelParams& params, Target& target,
                     Rng& rng);

}  // namespace mile
