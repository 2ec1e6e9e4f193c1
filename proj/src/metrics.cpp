#include "mile/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mile/rng.hpp"

namespace mile {

void CoverageSpec::validate() const {
  if (levels.empty()) throw Error(ErrorKind::Config, "coverage spec needs at least one level");
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0))
      throw Error(ErrorKind::Config, "coverage levels must lie strictly in (0, 1)");
  if (!weights.empty() && weights.size() != levels.size())
    throw Error(ErrorKind::Config, "coverage weights must match levels");
}

std::vector<double> CoverageSpec::normalized_weights() const {
  validate();
  std::vector<double> w = weights;
  if (w.empty()) w.assign(levels.size(), 1.0);
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  return w;
}

double empirical_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error(ErrorKind::Run, "quantile of an empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::pair<double, double> equal_tailed_interval(std::span<const double> sorted_draws,
                                                double level) {
  const double alpha = 1.0 - level;
  return {empirical_quantile(sorted_draws, 0.5 * alpha),
          empirical_quantile(sorted_draws, 1.0 - 0.5 * alpha)};
}

double lppd(const PosteriorModel& model, const PosteriorSamples& samples,
            const Matrix& x, const Dataset& targets) {
  if (x.rows == 0) throw Error(ErrorKind::Data, "lppd over an empty test set");
  PredictOptions opts;  // no intervals
  const PredictiveSummary summary = predict(model, samples, x, &targets, opts);
  double sum = 0.0;
  for (double v : summary.log_density) sum += v;
  return sum / static_cast<double>(x.rows);
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty())
    throw Error(ErrorKind::Run, "rmse: empty or mismatched inputs");
  double sq = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    sq += r * r;
  }
  return std::sqrt(sq / static_cast<double>(predictions.size()));
}

double accuracy(const Matrix& class_probabilities, std::span<const int> labels) {
  if (class_probabilities.rows != labels.size() || labels.empty())
    throw Error(ErrorKind::Run, "accuracy: empty or mismatched inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* p = class_probabilities.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < class_probabilities.cols; ++c)
      if (p[c] > p[best]) best = c;
    if (static_cast<int>(best) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::pair<std::vector<double>, std::vector<double>> credible_intervals(
    const Matrix& mus, const Matrix& sigmas, double level, std::uint64_t seed) {
  if (mus.rows != sigmas.rows || mus.cols != sigmas.cols || mus.cols == 0)
    throw Error(ErrorKind::Run, "credible_intervals: shape mismatch");
  const std::size_t n = mus.rows;
  std::vector<double> lower(n), upper(n);
  std::vector<double> draws(mus.cols);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    for (std::size_t j = 0; j < mus.cols; ++j)
      draws[j] = mus(i, j) + sigmas(i, j) * standard_normal(rng);
    std::sort(draws.begin(), draws.end());
    const auto [lo, hi] = equal_tailed_interval(draws, level);
    lower[i] = lo;
    upper[i] = hi;
  }
  return {std::move(lower), std::move(upper)};
}

CalibrationResult calibration_error(const Matrix& interval_lower,
                                    const Matrix& interval_upper,
                                    std::span<const double> targets,
                                    const CoverageSpec& spec) {
  const std::vector<double> w = spec.normalized_weights();
  if (interval_lower.cols != spec.levels.size() ||
      interval_upper.cols != spec.levels.size() ||
      interval_lower.rows != targets.size() || interval_upper.rows != targets.size())
    throw Error(ErrorKind::Run, "calibration_error: shape mismatch");

  CalibrationResult res;
  res.empirical_coverage.resize(spec.levels.size());
  double sq = 0.0;
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i] >= interval_lower(i, l) && targets[i] <= interval_upper(i, l))
        ++inside;
    const double cov = static_cast<double>(inside) / static_cast<double>(targets.size());
    res.empirical_coverage[l] = cov;
    const double gap = cov - spec.levels[l];  // = alpha_hat - alpha
    sq += w[l] * gap * gap;
  }
  res.calibration_error = std::sqrt(sq);
  return res;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_metrics_text(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");
  out << "task = " << (report.regression ? "regression" : "classification") << "\n";
  out << "lppd = " << fmt17(report.lppd) << "\n";
  if (report.regression) {
    out << "rmse = " << fmt17(report.rmse) << "\n";
    out << "calibration_error = " << fmt17(report.calibration) << "\n";
  } else {
    out << "accuracy = " << fmt17(report.accuracy) << "\n";
  }
  out << "de_lppd = " << fmt17(report.de_lppd) << "\n";
  if (report.regression)
    out << "de_rmse = " << fmt17(report.de_rmse) << "\n";
  else
    out << "de_accuracy = " << fmt17(report.de_accuracy) << "\n";
  for (std::size_t l = 0; l < report.coverage_levels.size(); ++l)
    out << "coverage_" << report.coverage_levels[l] << " = "
        << fmt17(report.empirical_coverage[l]) << "\n";
}

void write_coverage_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");
  out << "nominal,empirical\n";
  for (std::size_t l = 0; l < report.coverage_levels.size(); ++l)
    out << fmt17(report.coverage_levels[l]) << "," << fmt17(report.empirical_coverage[l])
        << "\n";
}

}  // namespace mile
