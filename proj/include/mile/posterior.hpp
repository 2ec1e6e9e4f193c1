#pragma once

#include <span>
#include <utility>
#include <vector>

#include "mile/common.hpp"
#include "mile/nn.hpp"
#include "mile/targets.hpp"

namespace mile {

/// Isotropic Gaussian N(0, variance I) over the flat parameter vector.
struct Prior {
  double variance = 1.0;
};

enum class LikelihoodKind { GaussianDistributional, Categorical };

/// GaussianDistributional reads the two network outputs as (location, log-scale);
/// Categorical reads num_classes outputs as logits.
struct Likelihood {
  LikelihoodKind kind = LikelihoodKind::GaussianDistributional;
  int num_classes = 0;

  int output_dim() const {
    return kind == LikelihoodKind::GaussianDistributional ? 2 : num_classes;
  }
};

struct Dataset {
  Matrix x;
  std::vector<double> y_real;  // regression targets
  std::vector<int> y_class;    // classification labels, 0..C-1

  std::size_t size() const { return x.rows; }
};

struct PosteriorModel {
  MlpArchitecture arch;
  Prior prior;
  Likelihood likelihood;
  Dataset train;

  void validate() const;
};

// The network's log-scale output is clamped to +-kLogScaleClamp before
// exponentiation; unclamped chains overflow during early sampling.
inline constexpr double kLogScaleClamp = 10.0;
inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// value = -d/2 log(2 pi s2) - |theta|^2/(2 s2); grad = -theta/s2.
std::pair<double, ParamVector> log_prior_and_grad(const Prior& prior,
                                                  const ParamVector& params);

/// Summed log likelihood of `targets` under the row-wise network outputs, and
/// its exact gradient with respect to the outputs.
std::pair<double, Matrix> log_likelihood_and_output_grads(const Likelihood& lik,
                                                          const Matrix& outputs,
                                                          const Dataset& targets);

/// Unnormalized log posterior (log prior + full-sum log likelihood) and its
/// gradient with respect to the flat parameter vector.
std::pair<double, ParamVector> log_posterior_and_grad(const PosteriorModel& model,
                                                      const ParamVector& params);

double predictive_log_density(const PosteriorModel& model, const ParamVector& params,
                              std::span<const double> x, double y);
double predictive_log_density(const PosteriorModel& model, const ParamVector& params,
                              std::span<const double> x, int y);

namespace detail {

/// Log likelihood of one row plus (optionally) its gradient w.r.t. the outputs.
double likelihood_row(const Likelihood& lik, const double* outputs, double y_real,
                      int y_class, double* output_grad);

}  // namespace detail

/// Fused forward + likelihood sweep (no gradient).
double loglik_value(const MlpArchitecture& arch, const Likelihood& lik,
                    const Dataset& data, std::span<const double> params,
                    NnWorkspace& ws);

/// Fused forward + likelihood + reverse sweep; writes d loglik / d params.
double loglik_and_param_grad(const MlpArchitecture& arch, const Likelihood& lik,
                             const Dataset& data, std::span<const double> params,
                             NnWorkspace& ws, std::span<double> grad);

/// log posterior + gradient via the fused sweep; the workspace-reusing core
/// behind both log_posterior_and_grad and PosteriorTarget.
double posterior_value_and_grad(const PosteriorModel& model,
                                std::span<const double> params, NnWorkspace& ws,
                                std::span<double> grad);

/// Per-chain sampler target for a BNN posterior. Owns its workspace.
class PosteriorTarget final : public Target {
 public:
  explicit PosteriorTarget(const PosteriorModel& model) : model_(&model) {}

  std::size_t dim() const override { return model_->arch.param_count(); }

  double logdensity_and_grad(std::span<const double> theta,
                             std::span<double> grad) override {
    return posterior_value_and_grad(*model_, theta, ws_, grad);
  }

 private:
  const PosteriorModel* model_;
  NnWorkspace ws_;
};

}  // namespace mile
