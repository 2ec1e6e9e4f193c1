#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mile/pipeline.hpp"
#include "mile/sample_io.hpp"

namespace {

using namespace mile;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::AllChainsFailed: return 4;
    default: return 1;
  }
}

void apply_workers(int workers) {
  if (workers <= 0) {
    if (const char* env = std::getenv("MILE_WORKERS")) workers = std::atoi(env);
  }
  if (workers > 0) set_max_workers(workers);
}

struct Overrides {
  std::int64_t seed = -1;
  int chains = 0;
  std::int64_t thinning = 0;
  std::string out_dir;

  void apply(RunManifest& manifest) const {
    if (seed >= 0) manifest.run.base_seed = static_cast<std::uint64_t>(seed);
    if (chains > 0) {
      manifest.run.chains = chains;
      manifest.run.training.ensemble_size = chains;
    }
    if (thinning > 0) manifest.run.thinning_interval = static_cast<std::size_t>(thinning);
    if (!out_dir.empty()) manifest.output_dir = out_dir;
  }
};

void print_headline(const RunManifest& manifest, const RunArtifacts& art) {
  const MetricsReport& m = art.metrics;
  std::printf("%-24s %10s %10s %10s %10s %9s %12s\n", "dataset", "lppd",
              m.regression ? "rmse" : "acc", "de_lppd",
              m.regression ? "de_rmse" : "de_acc", "de_min", "sampling_min");
  std::printf("%-24s %10.4f %10.4f %10.4f %10.4f %9.2f %12.2f\n",
              std::filesystem::path(manifest.dataset.path).filename().c_str(), m.lppd,
              m.regression ? m.rmse : m.accuracy, m.de_lppd,
              m.regression ? m.de_rmse : m.de_accuracy, art.de_seconds / 60.0,
              art.sampling_seconds / 60.0);

  std::size_t ok = 0, failed = 0;
  bool uniform_budget = true;
  std::uint64_t budget = 0;
  for (const auto& r : art.samples.reports) {
    if (r.failed) {
      ++failed;
      continue;
    }
    ++ok;
    if (budget == 0)
      budget = r.budget_gradient_evals();
    else if (budget != r.budget_gradient_evals())
      uniform_budget = false;
  }
  if (ok > 0 && uniform_budget)
    std::printf("gradient evaluations per successful chain: %llu\n",
                static_cast<unsigned long long>(budget));
  std::printf("chains: %zu successful, %zu failed\n", ok, failed);
}

int cmd_run(const std::string& config_path, const Overrides& overrides) {
  RunManifest manifest = RunManifest::read(config_path);
  overrides.apply(manifest);
  const SplitData split = load_and_split(manifest.dataset, manifest.split_seed);
  if (!split.standardization.constant_features.empty())
    std::fprintf(stderr, "warning: %zu constant feature(s), scale fixed to 1\n",
                 split.standardization.constant_features.size());
  const RunArtifacts art = run_pipeline(manifest, split);
  write_run_outputs(manifest, split, art);
  print_headline(manifest, art);
  std::printf("outputs written to %s\n", manifest.output_dir.c_str());
  return 0;
}

int cmd_evaluate(const std::string& samples_path, const std::string& config_path,
                 const std::string& out_dir) {
  RunManifest manifest = RunManifest::read(config_path);
  const PosteriorSamples samples = load_samples(samples_path);
  const SplitData split = load_and_split(manifest.dataset, manifest.split_seed);
  const PosteriorModel model = build_model(manifest, split);
  if (samples.dim != model.arch.param_count())
    throw Error(ErrorKind::Data, "sample dimensionality does not match the manifest model");

  // the DE baseline is retrained deterministically from the manifest seeds
  RunConfig cfg = manifest.run;
  cfg.chains = static_cast<int>(samples.num_chains);
  cfg.training.ensemble_size = cfg.chains;
  const DeepEnsemble ensemble =
      train_ensemble(model, split.val, cfg.training, samples.base_seed);
  const PosteriorSamples de_samples = ensemble_as_samples(ensemble, model.arch);

  const MetricsReport report = compute_metrics(model, samples, de_samples, split);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_metrics_text((std::filesystem::path(out_dir) / "metrics.txt").string(), report);
    if (report.regression)
      write_coverage_csv((std::filesystem::path(out_dir) / "coverage.csv").string(), report);
  }
  std::printf("lppd = %.6f\n", report.lppd);
  if (report.regression) {
    std::printf("rmse = %.6f\n", report.rmse);
    std::printf("calibration_error = %.6f\n", report.calibration);
  } else {
    std::printf("accuracy = %.6f\n", report.accuracy);
  }
  std::printf("de_lppd = %.6f\n", report.de_lppd);
  return 0;
}

int cmd_diagnose(const std::string& samples_path, const std::string& out_dir) {
  const PosteriorSamples samples = load_samples(samples_path);
  const DiagnosticsReport report = compute_diagnostics(samples);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_diagnostics_text((std::filesystem::path(out_dir) / "diagnostics.txt").string(),
                           report);
    if (!report.layer_ids.empty())
      write_layer_csv((std::filesystem::path(out_dir) / "layers.csv").string(), report);
  }
  std::printf("chains = %zu\n", report.chains);
  std::printf("parameters = %zu\n", report.parameters);
  std::printf("split_rhat_mean = %.6f\n", report.rhat_summary.mean);
  std::printf("split_rhat_max = %.6f\n", report.rhat_summary.max);
  std::printf("pooled_ess_mean = %.2f\n", report.ess_summary.mean);
  std::printf("pooled_ess_median = %.2f\n", report.ess_summary.median);
  return 0;
}

struct AblateCell {
  std::string value;
  bool failed = false;
  std::string error;
  double lppd = 0.0;
  double rmse = 0.0;
  double accuracy = 0.0;
  double eps_mean = 0.0;
  double length_mean = 0.0;
  std::size_t failed_chains = 0;
};

int cmd_ablate(const std::string& config_path, const std::string& parameter,
               const std::string& grid, const std::string& out_dir) {
  RunManifest manifest = RunManifest::read(config_path);
  if (!out_dir.empty()) manifest.output_dir = out_dir;
  if (parameter != "warmup_steps" && parameter != "ev_schedule" &&
      parameter != "eevpd_window" && parameter != "trust")
    throw Error(ErrorKind::Config,
                "ablate parameter must be one of warmup_steps, ev_schedule, "
                "eevpd_window, trust");

  std::vector<std::string> values;
  {
    std::string tok;
    std::istringstream ss(grid);
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) values.push_back(tok);
  }
  if (values.empty()) throw Error(ErrorKind::Config, "ablate needs a non-empty --grid");

  // one shared split and base seed across all cells
  const SplitData split = load_and_split(manifest.dataset, manifest.split_seed);

  std::vector<AblateCell> cells;
  for (const std::string& value : values) {
    AblateCell cell;
    cell.value = value;
    RunManifest variant = manifest;
    try {
      if (parameter == "warmup_steps") {
        variant.run.tuning.phase1_steps = std::stoull(value);
      } else if (parameter == "ev_schedule") {
        const auto colon = value.find(':');
        if (colon == std::string::npos)
          throw Error(ErrorKind::Config, "ev_schedule grid entries look like start:end");
        variant.run.tuning.ev_schedule_start = std::stod(value.substr(0, colon));
        variant.run.tuning.ev_schedule_end = std::stod(value.substr(colon + 1));
      } else if (parameter == "eevpd_window") {
        variant.run.tuning.eevpd_window_samples = std::stod(value);
      } else {
        variant.run.tuning.trust_in_estimate = std::stod(value);
      }

      const RunArtifacts art = run_pipeline(variant, split);
      cell.lppd = art.metrics.lppd;
      cell.rmse = art.metrics.rmse;
      cell.accuracy = art.metrics.accuracy;
      std::size_t ok = 0;
      for (const auto& r : art.samples.reports) {
        if (r.failed) {
          ++cell.failed_chains;
          continue;
        }
        ++ok;
        cell.eps_mean += r.step_size;
        cell.length_mean += r.decoherence_length;
      }
      if (ok > 0) {
        cell.eps_mean /= static_cast<double>(ok);
        cell.length_mean /= static_cast<double>(ok);
      }
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    cells.push_back(cell);
    std::printf("%s = %-12s", parameter.c_str(), cell.value.c_str());
    if (cell.failed)
      std::printf("  FAILED: %s\n", cell.error.c_str());
    else
      std::printf("  lppd %8.4f  rmse %8.4f  eps %10.3e  L %10.3e\n", cell.lppd,
                  cell.rmse, cell.eps_mean, cell.length_mean);
  }

  std::filesystem::create_directories(manifest.output_dir);
  const std::string csv_path =
      (std::filesystem::path(manifest.output_dir) / ("ablate_" + parameter + ".csv"))
          .string();
  std::ofstream csv(csv_path);
  csv << "value,lppd,rmse,step_size,decoherence_length,failed_chains,error\n";
  for (const auto& c : cells) {
    csv << c.value << ",";
    if (c.failed)
      csv << ",,,," << c.failed_chains << "," << c.error << "\n";
    else
      csv << c.lppd << "," << c.rmse << "," << c.eps_mean << "," << c.length_mean << ","
          << c.failed_chains << ",\n";
  }
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MILE: microcanonical Langevin ensembles for Bayesian neural networks"};
  app.require_subcommand(1);

  std::string config_path, samples_path, out_dir, parameter, grid;
  Overrides overrides;
  int workers = 0;

  CLI::App* run = app.add_subcommand("run", "train the ensemble, tune and sample");
  run->add_option("--config", config_path, "manifest path")->required();
  run->add_option("--seed", overrides.seed, "override base seed");
  run->add_option("--chains", overrides.chains, "override chain count");
  run->add_option("--thinning", overrides.thinning, "override thinning interval");
  run->add_option("--workers", workers, "bound the worker pool");
  run->add_option("--out", overrides.out_dir, "override output directory");

  CLI::App* evaluate = app.add_subcommand("evaluate", "recompute metrics from samples");
  evaluate->add_option("samples", samples_path, "sample file")->required();
  evaluate->add_option("--config", config_path, "manifest path")->required();
  evaluate->add_option("--workers", workers, "bound the worker pool");
  evaluate->add_option("--out", out_dir, "directory for metric files");

  CLI::App* diagnose = app.add_subcommand("diagnose", "sample-quality diagnostics");
  diagnose->add_option("samples", samples_path, "sample file")->required();
  diagnose->add_option("--workers", workers, "bound the worker pool");
  diagnose->add_option("--out", out_dir, "directory for diagnostic files");

  CLI::App* ablate = app.add_subcommand("ablate", "sweep one tuning hyperparameter");
  ablate->add_option("--config", config_path, "manifest path")->required();
  ablate->add_option("--parameter", parameter,
                     "warmup_steps | ev_schedule | eevpd_window | trust")
      ->required();
  ablate->add_option("--grid", grid, "comma-separated grid values")->required();
  ablate->add_option("--workers", workers, "bound the worker pool");
  ablate->add_option("--out", out_dir, "override output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    apply_workers(workers);
    if (run->parsed()) return cmd_run(config_path, overrides);
    if (evaluate->parsed()) return cmd_evaluate(samples_path, config_path, out_dir);
    if (diagnose->parsed()) return cmd_diagnose(samples_path, out_dir);
    if (ablate->parsed()) return cmd_ablate(config_path, parameter, grid, out_dir);
  } catch (const mile::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
