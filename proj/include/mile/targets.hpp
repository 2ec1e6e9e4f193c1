#pragma once

#include <cstdint>
#include <span>

#include "mile/common.hpp"

namespace mile {

/// A differentiable unnormalized log density. Instances are per-chain: they may
/// own scratch buffers and are not safe to share across threads.
struct Target {
  virtual ~Target() = default;
  virtual std::size_t dim() const = 0;
  /// Returns log density (up to an additive constant) and writes its gradient.
  virtual double logdensity_and_grad(std::span<const double> theta,
                                     std::span<double> grad) = 0;
};

/// N(mean, variance I); the standard sampler testbed.
class IsotropicGaussianTarget final : public Target {
 public:
  explicit IsotropicGaussianTarget(std::size_t dim, double mean = 0.0,
                                   double variance = 1.0)
      : dim_(dim), mean_(mean), inv_var_(1.0 / variance) {}

  std::size_t dim() const override { return dim_; }

  double logdensity_and_grad(std::span<const double> theta,
                             std::span<double> grad) override {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double r = theta[i] - mean_;
      grad[i] = -r * inv_var_;
      sq += r * r;
    }
    return -0.5 * sq * inv_var_;
  }

 private:
  std::size_t dim_;
  double mean_;
  double inv_var_;
};

/// Constant density with zero gradient (free-flight testbed).
class FlatTarget final : public Target {
 public:
  explicit FlatTarget(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  double logdensity_and_grad(std::span<const double>, std::span<double> grad) override {
    for (auto& g : grad) g = 0.0;
    return 0.0;
  }

 private:
  std::size_t dim_;
};

/// Wraps a target and counts gradient evaluations (per-chain budget accounting).
class CountingTarget final : public Target {
 public:
  explicit CountingTarget(Target& inner) : inner_(&inner) {}
  std::size_t dim() const override { return inner_->dim(); }
  double logdensity_and_grad(std::span<const double> theta,
                             std::span<double> grad) override {
    ++count_;
    return inner_->logdensity_and_grad(theta, grad);
  }
  std::uint64_t count() const { return count_; }

 private:
  Target* inner_;
  std::uint64_t count_ = 0;
};

}  // namespace mile
