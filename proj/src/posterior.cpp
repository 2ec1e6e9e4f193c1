#include "mile/posterior.hpp"

#include <omp.h>

#include <cmath>

namespace mile {

void PosteriorModel::validate() const {
  arch.validate();
  if (prior.variance <= 0.0) throw Error(ErrorKind::Config, "prior variance must be > 0");
  if (likelihood.kind == LikelihoodKind::GaussianDistributional) {
    if (arch.output_dim() != 2)
      throw Error(ErrorKind::Config,
                  "Gaussian distributional likelihood needs 2 network outputs");
    if (train.y_real.size() != train.size())
      throw Error(ErrorKind::Config, "regression targets do not match feature rows");
  } else {
    if (likelihood.num_classes < 2)
      throw Error(ErrorKind::Config, "categorical likelihood needs >= 2 classes");
    if (arch.output_dim() != likelihood.num_classes)
      throw Error(ErrorKind::Config, "network outputs do not match class count");
    if (train.y_class.size() != train.size())
      throw Error(ErrorKind::Config, "class labels do not match feature rows");
    for (int c : train.y_class)
      if (c < 0 || c >= likelihood.num_classes)
        throw Error(ErrorKind::Config, "class label out of range");
  }
  if (train.x.cols != static_cast<std::size_t>(arch.input_dim()))
    throw Error(ErrorKind::Config, "feature width does not match architecture input");
}

namespace detail {

double likelihood_row(const Likelihood& lik, const double* out, double y_real,
                      int y_class, double* gout) {
  if (lik.kind == LikelihoodKind::GaussianDistributional) {
    double s = out[1];
    bool clamped = false;
    if (s > kLogScaleClamp) {
      s = kLogScaleClamp;
      clamped = true;
    } else if (s < -kLogScaleClamp) {
      s = -kLogScaleClamp;
      clamped = true;
    }
    const double inv_var = std::exp(-2.0 * s);
    const double r = y_real - out[0];
    const double ll = -0.5 * kLogTwoPi - s - 0.5 * inv_var * r * r;
    if (gout) {
      gout[0] = inv_var * r;
      gout[1] = clamped ? 0.0 : inv_var * r * r - 1.0;
    }
    return ll;
  }

  const int m = lik.num_classes;
  double mx = out[0];
  for (int j = 1; j < m; ++j) mx = out[j] > mx ? out[j] : mx;
  double sum = 0.0;
  for (int j = 0; j < m; ++j) sum += std::exp(out[j] - mx);
  const double lse = mx + std::log(sum);
  if (gout) {
    for (int j = 0; j < m; ++j)
      gout[j] = (j == y_class ? 1.0 : 0.0) - std::exp(out[j] - lse);
  }
  return out[y_class] - lse;
}

}  // namespace detail

namespace {

// One fused block: forward, per-row likelihood, reverse accumulation.
// gblock == nullptr runs the value-only sweep.
double fused_block(const MlpArchitecture& arch, const Likelihood& lik,
                   const Dataset& data, const double* params, std::size_t r0,
                   std::size_t r1, double* gblock, double* acts, double* delta,
                   double* gout) {
  const std::size_t m = static_cast<std::size_t>(arch.output_dim());
  const std::size_t last = arch.activation_count() - m;
  const bool regression = lik.kind == LikelihoodKind::GaussianDistributional;
  double value = 0.0;
  for (std::size_t i = r0; i < r1; ++i) {
    detail::forward_row(arch, params, data.x.row(i), acts);
    const double yr = regression ? data.y_real[i] : 0.0;
    const int yc = regression ? 0 : data.y_class[i];
    value += detail::likelihood_row(lik, acts + last, yr, yc, gblock ? gout : nullptr);
    if (gblock)
      detail::backward_row(arch, params, data.x.row(i), acts, gout, gblock, delta);
  }
  return value;
}

thread_local std::vector<double> tl_fused_scratch;

double fused_sweep(const MlpArchitecture& arch, const Likelihood& lik,
                   const Dataset& data, std::span<const double> params,
                   NnWorkspace& ws, double* grad /* nullable, size d */) {
  const std::size_t d = arch.param_count();
  const std::size_t nb = num_row_blocks(data.size());
  const std::size_t acts_n = arch.activation_count();
  const std::size_t maxw = static_cast<std::size_t>(arch.max_width());
  const std::size_t scratch = acts_n + 2 * maxw + static_cast<std::size_t>(arch.output_dim());

  ws.block_values.assign(nb, 0.0);
  if (grad) ws.block_grads.assign(nb * d, 0.0);

  const bool par = nb > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t b = 0; b < nb; ++b) {
    tl_fused_scratch.resize(scratch);
    double* acts = tl_fused_scratch.data();
    double* delta = acts + acts_n;
    double* gout = delta + 2 * maxw;
    const std::size_t r0 = b * kRowBlock;
    const std::size_t r1 = std::min(r0 + kRowBlock, data.size());
    ws.block_values[b] = fused_block(arch, lik, data, params.data(), r0, r1,
                                     grad ? ws.block_grads.data() + b * d : nullptr,
                                     acts, delta, gout);
  }

  double value = 0.0;
  for (std::size_t b = 0; b < nb; ++b) value += ws.block_values[b];
  if (grad) {
    for (std::size_t j = 0; j < d; ++j) grad[j] = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const double* gb = ws.block_grads.data() + b * d;
      for (std::size_t j = 0; j < d; ++j) grad[j] += gb[j];
    }
  }
  return value;
}

}  // namespace

double loglik_value(const MlpArchitecture& arch, const Likelihood& lik,
                    const Dataset& data, std::span<const double> params,
                    NnWorkspace& ws) {
  return fused_sweep(arch, lik, data, params, ws, nullptr);
}

double loglik_and_param_grad(const MlpArchitecture& arch, const Likelihood& lik,
                             const Dataset& data, std::span<const double> params,
                             NnWorkspace& ws, std::span<double> grad) {
  return fused_sweep(arch, lik, data, params, ws, grad.data());
}

double posterior_value_and_grad(const PosteriorModel& model,
                                std::span<const double> params, NnWorkspace& ws,
                                std::span<double> grad) {
  const std::size_t d = params.size();
  const double ll =
      loglik_and_param_grad(model.arch, model.likelihood, model.train, params, ws, grad);
  const double inv_var = 1.0 / model.prior.variance;
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    sq += params[i] * params[i];
    grad[i] -= params[i] * inv_var;
  }
  const double lp = -0.5 * static_cast<double>(d) * std::log(2.0 * M_PI * model.prior.variance) -
                    0.5 * sq * inv_var;
  return ll + lp;
}

std::pair<double, ParamVector> log_prior_and_grad(const Prior& prior,
                                                  const ParamVector& params) {
  if (prior.variance <= 0.0) throw Error(ErrorKind::Config, "prior variance must be > 0");
  const std::size_t d = params.size();
  const double inv_var = 1.0 / prior.variance;
  ParamVector grad(d);
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    sq += params[i] * params[i];
    grad[i] = -params[i] * inv_var;
  }
  const double value =
      -0.5 * static_cast<double>(d) * std::log(2.0 * M_PI * prior.variance) - 0.5 * sq * inv_var;
  return {value, std::move(grad)};
}

std::pair<double, Matrix> log_likelihood_and_output_grads(const Likelihood& lik,
                                                          const Matrix& outputs,
                                                          const Dataset& targets) {
  const auto m = static_cast<std::size_t>(lik.output_dim());
  if (outputs.cols != m)
    throw Error(ErrorKind::Run, "log_likelihood: output width mismatch");
  const bool regression = lik.kind == LikelihoodKind::GaussianDistributional;
  if (regression ? targets.y_real.size() != outputs.rows
                 : targets.y_class.size() != outputs.rows)
    throw Error(ErrorKind::Run, "log_likelihood: target count mismatch");
  for (double v : outputs.data)
    if (!std::isfinite(v)) throw Error(ErrorKind::Run, "log_likelihood: non-finite outputs");

  Matrix gout(outputs.rows, m);
  const std::size_t nb = num_row_blocks(outputs.rows);
  double value = 0.0;
  // same fixed-block summation order as the fused sweep
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t r0 = b * kRowBlock;
    const std::size_t r1 = std::min(r0 + kRowBlock, outputs.rows);
    double part = 0.0;
    for (std::size_t i = r0; i < r1; ++i) {
      const double yr = regression ? targets.y_real[i] : 0.0;
      const int yc = regression ? 0 : targets.y_class[i];
      part += detail::likelihood_row(lik, outputs.row(i), yr, yc, gout.row(i));
    }
    value += part;
  }
  return {value, std::move(gout)};
}

std::pair<double, ParamVector> log_posterior_and_grad(const PosteriorModel& model,
                                                      const ParamVector& params) {
  model.validate();
  if (params.size() != model.arch.param_count())
    throw Error(ErrorKind::Run, "log_posterior: parameter count mismatch");
  NnWorkspace ws;
  ParamVector grad(params.size());
  const double value = posterior_value_and_grad(model, params, ws, grad);
  return {value, std::move(grad)};
}

namespace {

double predictive_row(const PosteriorModel& model, const ParamVector& params,
                      std::span<const double> x, double y_real, int y_class) {
  if (x.size() != static_cast<std::size_t>(model.arch.input_dim()))
    throw Error(ErrorKind::Run, "predictive_log_density: feature width mismatch");
  std::vector<double> acts(model.arch.activation_count());
  detail::forward_row(model.arch, params.data(), x.data(), acts.data());
  const auto m = static_cast<std::size_t>(model.arch.output_dim());
  const double* out = acts.data() + (acts.size() - m);
  for (std::size_t j = 0; j < m; ++j)
    if (!std::isfinite(out[j]))
      throw Error(ErrorKind::Run, "predictive_log_density: non-finite outputs");
  return detail::likelihood_row(model.likelihood, out, y_real, y_class, nullptr);
}

}  // namespace

double predictive_log_density(const PosteriorModel& model, const ParamVector& params,
                              std::span<const double> x, double y) {
  if (model.likelihood.kind != LikelihoodKind::GaussianDistributional)
    throw Error(ErrorKind::Run, "real-valued target needs the Gaussian likelihood");
  return predictive_row(model, params, x, y, 0);
}

double predictive_log_density(const PosteriorModel& model, const ParamVector& params,
                              std::span<const double> x, int y) {
  if (model.likelihood.kind != LikelihoodKind::Categorical)
    throw Error(ErrorKind::Run, "class-valued target needs the categorical likelihood");
  return predictive_row(model, params, x, 0.0, y);
}

}  // namespace mile
