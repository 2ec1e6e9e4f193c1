#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mile/ensemble.hpp"

namespace mile {

struct CoverageSpec {
  std::vector<double> levels{0.5, 0.75, 0.9, 0.95};
  std::vector<double> weights;  // empty: uniform, normalized

  void validate() const;
  std::vector<double> normalized_weights() const;
};

/// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::span<const double> sorted, double q);

/// Equal-tailed interval (quantiles at alpha/2 and 1-alpha/2) from sorted draws.
std::pair<double, double> equal_tailed_interval(std::span<const double> sorted_draws,
                                                double level);

/// Mean over test points of the log mixture predictive density (log-sum-exp
/// over all K*S posterior samples minus log(K*S)).
double lppd(const PosteriorModel& model, const PosteriorSamples& samples,
            const Matrix& x, const Dataset& targets);

/// Root mean squared error on whatever scale predictions/targets share.
double rmse(std::span<const double> predictions, std::span<const double> targets);

/// Fraction of rows whose argmax class probability matches the label;
/// ties resolve to the lowest class index.
double accuracy(const Matrix& class_probabilities, std::span<const int> labels);

/// Draw-based equal-tailed credible intervals: one y ~ N(mu, sigma^2) draw per
/// posterior sample per test point, seeded. mus/sigmas are n_test x n_samples.
std::pair<std::vector<double>, std::vector<double>> credible_intervals(
    const Matrix& mus, const Matrix& sigmas, double level, std::uint64_t seed);

struct CalibrationResult {
  double calibration_error = 0.0;
  std::vector<double> empirical_coverage;  // per level
};

/// Weighted root-mean-square gap between nominal and empirical coverage.
/// Intervals are the n_test x levels bounds produced by predict().
CalibrationResult calibration_error(const Matrix& interval_lower,
                                    const Matrix& interval_upper,
                                    std::span<const double> targets,
                                    const CoverageSpec& spec);

/// Flat key/value metrics report plus the per-level coverage table.
struct MetricsReport {
  bool regression = true;
  double lppd = 0.0;
  double rmse = 0.0;
  double accuracy = 0.0;
  double calibration = 0.0;
  std::vector<double> coverage_levels;
  std::vector<double> empirical_coverage;
  double de_lppd = 0.0;  // deep-ensemble baseline on the same test data
  double de_rmse = 0.0;
  double de_accuracy = 0.0;
};

void write_metrics_text(const std::string& path, const MetricsReport& report);
void write_coverage_csv(const std::string& path, const MetricsReport& report);

}  // namespace mile
