#include "mile/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mile/rng.hpp"
#include "mile/sample_io.hpp"

namespace mile {

PosteriorModel build_model(const RunManifest& manifest, const SplitData& split) {
  PosteriorModel model;
  model.arch.layer_widths.push_back(static_cast<int>(split.train.x.cols));
  for (int w : manifest.hidden_widths) model.arch.layer_widths.push_back(w);
  if (split.task == TaskKind::Regression) {
    model.arch.layer_widths.push_back(2);
    model.likelihood.kind = LikelihoodKind::GaussianDistributional;
  } else {
    model.arch.layer_widths.push_back(split.num_classes);
    model.likelihood.kind = LikelihoodKind::Categorical;
    model.likelihood.num_classes = split.num_classes;
  }
  model.prior.variance = manifest.prior_variance;
  model.train = split.train;
  model.validate();
  return model;
}

std::uint64_t prediction_seed(std::uint64_t base_seed) {
  return derive_seed(base_seed, 0x9D1C7ULL);
}

MetricsReport compute_metrics(const PosteriorModel& model,
                              const PosteriorSamples& samples,
                              const PosteriorSamples& de_samples,
                              const SplitData& split) {
  const CoverageSpec coverage;
  const bool regression = split.task == TaskKind::Regression;

  PredictOptions opts;
  opts.interval_seed = prediction_seed(samples.base_seed);
  if (regression) opts.coverage_levels = coverage.levels;

  const PredictiveSummary pred = predict(model, samples, split.test.x, &split.test, opts);
  PredictOptions de_opts = opts;
  const PredictiveSummary de_pred =
      predict(model, de_samples, split.test.x, &split.test, de_opts);

  MetricsReport report;
  report.regression = regression;
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  report.lppd = mean(pred.log_density);
  report.de_lppd = mean(de_pred.log_density);
  if (regression) {
    report.rmse = rmse(pred.point_prediction, split.test.y_real);
    report.de_rmse = rmse(de_pred.point_prediction, split.test.y_real);
    const CalibrationResult cal = calibration_error(pred.interval_lower,
                                                    pred.interval_upper,
                                                    split.test.y_real, coverage);
    report.calibration = cal.calibration_error;
    report.coverage_levels = coverage.levels;
    report.empirical_coverage = cal.empirical_coverage;
  } else {
    report.accuracy = accuracy(pred.class_probabilities, split.test.y_class);
    report.de_accuracy = accuracy(de_pred.class_probabilities, split.test.y_class);
  }
  return report;
}

DiagnosticsReport compute_run_diagnostics(const PosteriorSamples& samples) {
  return compute_diagnostics(samples);
}

RunArtifacts run_pipeline(const RunManifest& manifest, const SplitData& split) {
  using clock = std::chrono::steady_clock;
  RunArtifacts art;

  const PosteriorModel model = build_model(manifest, split);
  RunConfig cfg = manifest.run;
  cfg.training.ensemble_size = cfg.chains;
  cfg.validate();

  const auto t0 = clock::now();
  art.ensemble = train_ensemble(model, split.val, cfg.training, cfg.base_seed);
  const auto t1 = clock::now();
  art.samples = run_ensemble(art.ensemble, model, cfg);
  const auto t2 = clock::now();

  art.diagnostics = compute_diagnostics(art.samples);
  const PosteriorSamples de_samples = ensemble_as_samples(art.ensemble, model.arch);
  art.metrics = compute_metrics(model, art.samples, de_samples, split);

  PredictOptions opts;
  opts.interval_seed = prediction_seed(art.samples.base_seed);
  if (split.task == TaskKind::Regression) opts.coverage_levels = CoverageSpec{}.levels;
  art.prediction = predict(model, art.samples, split.test.x, &split.test, opts);
  const auto t3 = clock::now();

  art.de_seconds = std::chrono::duration<double>(t1 - t0).count();
  art.sampling_seconds = std::chrono::duration<double>(t2 - t1).count();
  art.evaluation_seconds = std::chrono::duration<double>(t3 - t2).count();
  return art;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_chain_log(const std::string& path, const RunArtifacts& art) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");
  for (std::size_t k = 0; k < art.samples.reports.size(); ++k) {
    const ChainReport& r = art.samples.reports[k];
    out << "[chain " << r.chain_id << "]\n";
    out << "failed = " << (r.failed ? 1 : 0) << "\n";
    if (r.failed) out << "failure_reason = " << r.failure_reason << "\n";
    out << "step_size = " << fmt17(r.step_size) << "\n";
    out << "decoherence_length = " << fmt17(r.decoherence_length) << "\n";
    out << "initial_L = " << fmt17(r.initial_L) << "\n";
    out << "final_eevpd = " << fmt17(r.final_eevpd) << "\n";
    out << "halving_events = " << r.halving_events << "\n";
    out << "steps_executed = " << r.steps_executed << "\n";
    out << "retained_samples = " << r.retained_samples << "\n";
    out << "gradient_evals = " << r.gradient_evals << "\n";
    out << "budget_gradient_evals = " << r.budget_gradient_evals() << "\n";
    out << "recovery_gradient_evals = " << r.recovery_gradient_evals << "\n";
    out << "wallclock_seconds = " << fmt17(r.wallclock_seconds) << "\n";
    if (k < art.samples.tuned.size()) {
      const TunedParams& t = art.samples.tuned[k];
      // a coarse step-size trace (32 points) for quick inspection
      if (!t.step_size_trace.empty()) {
        out << "step_size_trace =";
        const std::size_t n = t.step_size_trace.size();
        const std::size_t stride = n <= 32 ? 1 : n / 32;
        for (std::size_t i = 0; i < n; i += stride) out << " " << fmt17(t.step_size_trace[i]);
        out << "\n";
      }
    }
    out << "\n";
  }
}

}  // namespace

void write_run_outputs(const RunManifest& manifest, const SplitData& split,
                       const RunArtifacts& artifacts) {
  namespace fs = std::filesystem;
  fs::create_directories(manifest.output_dir);
  const auto path = [&](const char* name) {
    return (fs::path(manifest.output_dir) / name).string();
  };

  save_samples(path("samples.mile"), artifacts.samples);
  write_metrics_text(path("metrics.txt"), artifacts.metrics);
  if (artifacts.metrics.regression) write_coverage_csv(path("coverage.csv"), artifacts.metrics);
  write_diagnostics_text(path("diagnostics.txt"), artifacts.diagnostics);
  if (!artifacts.diagnostics.layer_ids.empty())
    write_layer_csv(path("layers.csv"), artifacts.diagnostics);
  write_chain_log(path("chains.txt"), artifacts);

  RunManifest materialized = manifest;
  materialized.has_standardization = true;
  materialized.standardization = split.standardization;
  materialized.write(path("manifest.txt"));
}

}  // namespace mile
