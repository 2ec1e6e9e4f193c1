#pragma once

#include <string>

#include "mile/diagnostics.hpp"
#include "mile/manifest.hpp"
#include "mile/metrics.hpp"

namespace mile {

struct RunArtifacts {
  DeepEnsemble ensemble;
  PosteriorSamples samples;
  DiagnosticsReport diagnostics;
  MetricsReport metrics;
  PredictiveSummary prediction;
  double de_seconds = 0.0;
  double sampling_seconds = 0.0;
  double evaluation_seconds = 0.0;
};

PosteriorModel build_model(const RunManifest& manifest, const SplitData& split);

/// predict() interval seed for a run, derived from the sampling base seed so
/// re-evaluating persisted samples reproduces the in-run metrics bit-exactly.
std::uint64_t prediction_seed(std::uint64_t base_seed);

/// DE training, K tuned chains, diagnostics and metrics (including the
/// deep-ensemble baseline on the same members).
RunArtifacts run_pipeline(const RunManifest& manifest, const SplitData& split);

MetricsReport compute_metrics(const PosteriorModel& model,
                              const PosteriorSamples& samples,
                              const PosteriorSamples& de_samples,
                              const SplitData& split);

DiagnosticsReport compute_run_diagnostics(const PosteriorSamples& samples);

/// Writes samples.mile, metrics.txt, coverage.csv, diagnostics.txt, layers.csv,
/// chains.txt and the materialized manifest into manifest.output_dir.
void write_run_outputs(const RunManifest& manifest, const SplitData& split,
                       const RunArtifacts& artifacts);

}  // namespace mile
