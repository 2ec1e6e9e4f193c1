#include "mile/mclmc.hpp"

#include <cmath>
#include <limits>

#include "mile/common.hpp"

namespace mile {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

thread_local std::vector<double> tl_pos, tl_vel, tl_grad, tl_noise;

}  // namespace

ChainState make_chain_state(Target& target, std::vector<double> position, Rng& rng) {
  ChainState state;
  const std::size_t d = position.size();
  state.position = std::move(position);
  state.velocity.resize(d);
  fill_standard_normal(rng, state.velocity);
  double norm2 = 0.0;
  for (double v : state.velocity) norm2 += v * v;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : state.velocity) v *= inv;
  state.gradient.resize(d);
  state.logdensity = target.logdensity_and_grad(state.position, state.gradient);
  return state;
}

double velocity_drift_update(std::span<double> u, std::span<const double> grad,
                             double delta_t, std::size_t dim) {
  if (dim < 2) throw Error(ErrorKind::Run, "velocity drift needs dimension >= 2");
  double gnorm2 = 0.0;
  for (double g : grad) gnorm2 += g * g;
  const double gnorm = std::sqrt(gnorm2);
  if (gnorm == 0.0) return 0.0;

  const double dm1 = static_cast<double>(dim - 1);
  const double delta = delta_t * gnorm / dm1;
  double eu = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) eu += grad[i] * u[i];
  eu /= gnorm;

  // scaled by exp(-delta) so large delta cannot overflow
  const double emd = std::exp(-delta);
  const double em2d = emd * emd;
  const double denom = 0.5 * (1.0 + eu) + 0.5 * em2d * (1.0 - eu);
  const double coef = (0.5 * (1.0 - em2d) + eu * (0.5 * (1.0 + em2d) - emd)) / gnorm;
  const double inv_denom = 1.0 / denom;
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = (u[i] * emd + grad[i] * coef) * inv_denom;
  return dm1 * (delta + std::log(denom));
}

StepInfo mn2_step(ChainState& state, double step_size, Target& target) {
  const std::size_t d = state.dim();
  const double lambda = kMinimalNormLambda;
  StepInfo info;

  tl_pos = state.position;
  tl_vel = state.velocity;
  tl_grad = state.gradient;
  const double logdensity_before = state.logdensity;

  double dke = velocity_drift_update(tl_vel, tl_grad, lambda * step_size, d);

  for (std::size_t i = 0; i < d; ++i) tl_pos[i] += 0.5 * step_size * tl_vel[i];
  double logdensity = target.logdensity_and_grad(tl_pos, tl_grad);
  if (!std::isfinite(logdensity) || !all_finite(tl_grad)) {
    info.is_finite = false;
    info.energy_change = std::numeric_limits<double>::quiet_NaN();
    return info;
  }

  dke += velocity_drift_update(tl_vel, tl_grad, (1.0 - 2.0 * lambda) * step_size, d);

  for (std::size_t i = 0; i < d; ++i) tl_pos[i] += 0.5 * step_size * tl_vel[i];
  logdensity = target.logdensity_and_grad(tl_pos, tl_grad);
  if (!std::isfinite(logdensity) || !all_finite(tl_grad)) {
    info.is_finite = false;
    info.energy_change = std::numeric_limits<double>::quiet_NaN();
    return info;
  }

  dke += velocity_drift_update(tl_vel, tl_grad, lambda * step_size, d);

  const double energy_change = (logdensity_before - logdensity) + dke;
  if (!std::isfinite(energy_change) || !all_finite(tl_pos) || !all_finite(tl_vel)) {
    info.is_finite = false;
    info.energy_change = std::numeric_limits<double>::quiet_NaN();
    return info;
  }

  state.position.swap(tl_pos);
  state.velocity.swap(tl_vel);
  state.gradient.swap(tl_grad);
  state.logdensity = logdensity;
  info.energy_change = energy_change;
  return info;
}

void partial_refresh(std::span<double> u, double step_size, double decoherence_length,
                     Rng& rng) {
  const std::size_t d = u.size();
  const double nu =
      std::sqrt(std::expm1(2.0 * step_size / decoherence_length) / static_cast<double>(d));
  tl_noise.resize(d);
  fill_standard_normal(rng, tl_noise);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    u[i] += nu * tl_noise[i];
    norm2 += u[i] * u[i];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (std::size_t i = 0; i < d; ++i) u[i] *= inv;
}

StepInfo kernel_step(ChainState& state, const KernelParams& params, Target& target,
                     Rng& rng) {
  const StepInfo info = mn2_step(state, params.step_size, target);
  if (info.is_finite)
    partial_refresh(state.velocity, params.step_size, params.decoherence_length, rng);
  return info;
}

}  // namespace mile
