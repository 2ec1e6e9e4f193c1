// Acceptance suite: one pass/fail line per criterion, each pinned to its
// stated tolerance. Run all criteria or a subset via --only N [N ...].

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mile/diagnostics.hpp"
#include "mile/manifest.hpp"
#include "mile/metrics.hpp"
#include "mile/pipeline.hpp"
#include "mile/rng.hpp"
#include "mile/sample_io.hpp"
#include "mile/targets.hpp"
#include "mile/tuning.hpp"
#include "support/synthetic.hpp"
#include "support/testutil.hpp"

using namespace mile;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Gaussian-target correctness of the full tuned pipeline
// ---------------------------------------------------------------------------
Outcome criterion_gaussian_target() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = 100;
  IsotropicGaussianTarget gauss(d);

  RunConfig cfg;  // default budgets: 40k/5k/5k tuning + 10k sampling, thinning 10
  cfg.chains = 1;

  const ChainResult res =
      run_chain(std::vector<double>(d, 0.0), gauss, cfg, /*chain_seed=*/3, /*eps0=*/0.01);
  if (res.report.failed) return {false, "chain failed: " + res.report.failure_reason};

  const std::size_t s = cfg.retained_samples();
  double worst_mean = 0.0, var_lo = 1e30, var_hi = 0.0;
  std::vector<double> pooled;
  pooled.reserve(s * d);
  for (std::size_t p = 0; p < d; ++p) {
    std::vector<double> coord(s);
    for (std::size_t t = 0; t < s; ++t) coord[t] = res.samples[t * d + p];
    const double m = test::mean_of(coord);
    const double v = test::variance_of(coord);
    worst_mean = std::max(worst_mean, std::abs(m));
    var_lo = std::min(var_lo, v);
    var_hi = std::max(var_hi, v);
    pooled.insert(pooled.end(), coord.begin(), coord.end());
  }
  const double ks = test::ks_statistic_normal(pooled);
  const double wall = seconds_since(t0);

  std::ostringstream detail;
  detail << "max |mean| " << worst_mean << " (<=0.1), variance [" << var_lo << ", "
         << var_hi << "] (within [0.9,1.1]), KS " << ks << " (<0.05), " << wall << "s";
  const bool pass =
      worst_mean <= 0.1 && var_lo >= 0.9 && var_hi <= 1.1 && ks < 0.05;
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 2. Gradient oracle: log-posterior gradients vs central finite differences
// ---------------------------------------------------------------------------
Outcome criterion_gradient_oracle() {
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    PosteriorModel model;
    const int p = 2 + static_cast<int>(uniform_below(rng, 6));
    const int h1 = 4 + static_cast<int>(uniform_below(rng, 12));
    const bool two_hidden = uniform01(rng) < 0.5;
    const bool classify = trial % 2 == 1;
    model.arch.layer_widths = {p, h1};
    if (two_hidden)
      model.arch.layer_widths.push_back(4 + static_cast<int>(uniform_below(rng, 12)));
    if (classify) {
      const int classes = 2 + static_cast<int>(uniform_below(rng, 4));
      model.arch.layer_widths.push_back(classes);
      model.likelihood.kind = LikelihoodKind::Categorical;
      model.likelihood.num_classes = classes;
    } else {
      model.arch.layer_widths.push_back(2);
      model.likelihood.kind = LikelihoodKind::GaussianDistributional;
    }
    model.prior.variance = 0.5 + uniform01(rng);

    const std::size_t n = 5 + uniform_below(rng, 25);
    model.train.x = Matrix(n, p);
    for (auto& v : model.train.x.data) v = standard_normal(rng);
    if (classify) {
      model.train.y_class.resize(n);
      for (auto& v : model.train.y_class)
        v = static_cast<int>(uniform_below(rng, model.likelihood.num_classes));
    } else {
      model.train.y_real.resize(n);
      for (auto& v : model.train.y_real) v = standard_normal(rng);
    }

    const std::size_t dim = model.arch.param_count();
    if (dim > 500) {
      --trial;
      continue;
    }
    ParamVector theta(dim);
    for (auto& v : theta) v = 0.5 * standard_normal(rng);

    const auto [value, grad] = log_posterior_and_grad(model, theta);
    (void)value;
    const auto fd = test::fd_gradient(
        [&](const std::vector<double>& t) { return log_posterior_and_grad(model, t).first; },
        theta, 1e-5);
    worst = std::max(worst, test::rel_norm_error(fd, grad));
  }
  std::ostringstream detail;
  detail << "worst relative gradient error over 20 triples: " << worst << " (<1e-5)";
  return {worst < 1e-5, detail.str()};
}

// ---------------------------------------------------------------------------
// 3. Budget exactness: 120000 gradient evaluations per successful chain
// ---------------------------------------------------------------------------
Outcome criterion_budget() {
  std::ostringstream detail;
  bool pass = true;
  const std::vector<std::pair<std::string, RawData>> datasets = {
      {"yacht-size", test::synthetic_regression(308, 6, 9104)},
      {"tiny", test::synthetic_regression(60, 3, 777)}};
  for (const auto& [name, raw] : datasets) {
    const SplitData split = split_and_standardize(raw, TaskKind::Regression, 1);

    RunManifest manifest;  // default budgets
    manifest.run.chains = 2;
    manifest.run.training.ensemble_size = 2;
    manifest.run.base_seed = 21;

    const RunArtifacts art = run_pipeline(manifest, split);
    for (const auto& r : art.samples.reports) {
      if (r.failed) {
        pass = false;
        detail << name << " chain " << r.chain_id << " failed; ";
        continue;
      }
      if (r.budget_gradient_evals() != 120000) {
        pass = false;
        detail << name << " chain " << r.chain_id << " budget "
               << r.budget_gradient_evals() << " != 120000; ";
      }
    }
  }
  if (pass) detail << "every successful chain reported exactly 120000 gradient evals";
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 4. Robustness: 100 chains x 4 datasets, zero failures
// ---------------------------------------------------------------------------
Outcome criterion_robustness() {
  std::ostringstream detail;
  std::size_t total_failed = 0;
  for (const auto& spec : test::kAllStandIns) {
    const auto t0 = std::chrono::steady_clock::now();
    const SplitData split = test::standin_split(spec, 1);

    RunManifest manifest;  // default budgets throughout
    manifest.run.chains = 100;
    manifest.run.training.ensemble_size = 100;
    manifest.run.base_seed = 4;

    const RunArtifacts art = run_pipeline(manifest, split);
    std::size_t failed = 0;
    for (const auto& r : art.samples.reports)
      if (r.failed) ++failed;
    total_failed += failed;
    detail << spec.name << " " << failed << "/100 failed (" << std::fixed
           << std::setprecision(1) << seconds_since(t0) / 60.0 << "min); ";
    detail.unsetf(std::ios_base::fixed);
  }
  return {total_failed == 0, detail.str()};
}

// shared Energy runs for criteria 5 and 6
struct BenchmarkRun {
  double lppd = 0.0;
  double rmse = 0.0;
  double de_lppd = 0.0;
};

std::map<std::uint64_t, BenchmarkRun>& energy_runs() {
  static std::map<std::uint64_t, BenchmarkRun> cache;
  return cache;
}

BenchmarkRun benchmark_run(const test::StandInSpec& spec, std::uint64_t split_seed) {
  const SplitData split = test::standin_split(spec, split_seed);
  RunManifest manifest;  // arch [p,16,16,2], 12 chains, default budgets
  manifest.run.base_seed = split_seed;
  const RunArtifacts art = run_pipeline(manifest, split);
  return {art.metrics.lppd, art.metrics.rmse, art.metrics.de_lppd};
}

BenchmarkRun energy_run(std::uint64_t split_seed) {
  auto& cache = energy_runs();
  const auto it = cache.find(split_seed);
  if (it != cache.end()) return it->second;
  const BenchmarkRun run = benchmark_run(test::kEnergy, split_seed);
  cache[split_seed] = run;
  return run;
}

// ---------------------------------------------------------------------------
// 5. Desk-scale benchmark reproduction on the Energy table
// ---------------------------------------------------------------------------
Outcome criterion_energy_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  double lppd = 0.0, rmse = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const BenchmarkRun run = energy_run(seed);
    lppd += run.lppd / 3.0;
    rmse += run.rmse / 3.0;
    detail << "seed " << seed << ": lppd " << run.lppd << " rmse " << run.rmse << "; ";
  }
  detail << "mean lppd " << lppd << " (>=2.0), mean rmse " << rmse << " (<=0.06), "
         << seconds_since(t0) / 60.0 << "min";
  return {lppd >= 2.0 && rmse <= 0.06, detail.str()};
}

// ---------------------------------------------------------------------------
// 6. Ensemble improvement over the deep-ensemble baseline, every split seed
// ---------------------------------------------------------------------------
Outcome criterion_ensemble_improvement() {
  std::ostringstream detail;
  bool pass = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    const BenchmarkRun run = energy_run(seed);
    detail << "energy seed " << seed << ": " << run.lppd << " vs DE " << run.de_lppd
           << "; ";
    if (!(run.lppd > run.de_lppd)) pass = false;
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    const BenchmarkRun run = benchmark_run(test::kYacht, seed);
    detail << "yacht seed " << seed << ": " << run.lppd << " vs DE " << run.de_lppd
           << "; ";
    if (!(run.lppd > run.de_lppd)) pass = false;
  }
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 7. ESS oracle
// ---------------------------------------------------------------------------
Outcome criterion_ess_oracle() {
  const std::size_t s = 10000;
  Matrix iid(s, 1);
  Rng rng(23);
  for (auto& v : iid.data) v = standard_normal(rng);
  const double iid_frac = ess_per_dimension(iid).ess[0] / static_cast<double>(s);

  Matrix ar(s, 1);
  const auto series = test::ar1_series(0.9, s, 29);
  for (std::size_t i = 0; i < s; ++i) ar(i, 0) = series[i];
  const double ar_frac = ess_per_dimension(ar).ess[0] / static_cast<double>(s);
  const double expected = (1.0 - 0.9) / (1.0 + 0.9);

  std::ostringstream detail;
  detail << "iid ESS/S " << iid_frac << " (in [0.8,1.2]), AR(1) ESS/S " << ar_frac
         << " vs " << expected << " (+-30%)";
  const bool pass = iid_frac >= 0.8 && iid_frac <= 1.2 &&
                    std::abs(ar_frac - expected) <= 0.3 * expected;
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Integrator order: Var(dE) ~ eps^6
// ---------------------------------------------------------------------------
Outcome criterion_integrator_order() {
  const std::size_t d = 10;
  IsotropicGaussianTarget gauss(d);
  auto var_de = [&](double eps) {
    Rng rng(31);
    ChainState state = make_chain_state(gauss, std::vector<double>(d, 0.3), rng);
    const KernelParams params{eps, std::sqrt(static_cast<double>(d))};
    std::vector<double> des;
    for (int i = 0; i < 4000; ++i) {
      const StepInfo info = kernel_step(state, params, gauss, rng);
      if (!info.is_finite) continue;
      if (i >= 500) des.push_back(info.energy_change);
    }
    return test::variance_of(des);
  };
  std::vector<double> loge, logv;
  for (double eps : {0.4, 0.2, 0.1}) {
    loge.push_back(std::log(eps));
    logv.push_back(std::log(var_de(eps)));
  }
  const double me = test::mean_of(loge), mv = test::mean_of(logv);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < loge.size(); ++i) {
    num += (loge[i] - me) * (logv[i] - mv);
    den += (loge[i] - me) * (loge[i] - me);
  }
  const double slope = num / den;
  std::ostringstream detail;
  detail << "fitted exponent " << slope << " (in [4,8])";
  return {slope >= 4.0 && slope <= 8.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Calibration self-consistency
// ---------------------------------------------------------------------------
Outcome criterion_calibration() {
  // data generated from the model's own predictive mixture
  Rng rng(37);
  const std::size_t n = 10000;
  const std::size_t draws = 500;
  Matrix mus(n, draws), sigmas(n, draws);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double center = standard_normal(rng);
    for (std::size_t j = 0; j < draws; ++j) {
      mus(i, j) = center + 0.4 * standard_normal(rng);
      sigmas(i, j) = 0.6;
    }
    const std::size_t pick = uniform_below(rng, draws);
    y[i] = mus(i, pick) + sigmas(i, pick) * standard_normal(rng);
  }
  CoverageSpec spec;
  Matrix lo(n, spec.levels.size()), hi(n, spec.levels.size());
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    const auto [plo, phi] = credible_intervals(mus, sigmas, spec.levels[l], 101 + l);
    for (std::size_t i = 0; i < n; ++i) {
      lo(i, l) = plo[i];
      hi(i, l) = phi[i];
    }
  }
  const CalibrationResult self = calibration_error(lo, hi, y, spec);

  // exact-coverage construction: CalE must be exactly zero
  const std::size_t m = 400;
  Matrix zlo(m, spec.levels.size()), zhi(m, spec.levels.size());
  std::vector<double> zy(m);
  for (std::size_t i = 0; i < m; ++i) {
    zy[i] = static_cast<double>(i);
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      const bool cover = i < static_cast<std::size_t>(spec.levels[l] * m);
      zlo(i, l) = cover ? zy[i] - 1.0 : zy[i] + 1.0;
      zhi(i, l) = cover ? zy[i] + 1.0 : zy[i] + 2.0;
    }
  }
  const CalibrationResult exact = calibration_error(zlo, zhi, zy, spec);

  std::ostringstream detail;
  detail << "self-consistency CalE " << self.calibration_error
         << " (<0.02), exact construction CalE " << exact.calibration_error
         << " (== 0)";
  return {self.calibration_error < 0.02 && exact.calibration_error == 0.0,
          detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Determinism across worker counts through the CLI
// ---------------------------------------------------------------------------
std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion_determinism() {
  const char* cli = std::getenv("MILE_CLI");
  if (!cli) return {false, "MILE_CLI environment variable not set"};

  namespace fs = std::filesystem;
  const fs::path work = fs::temp_directory_path() / "mile_acceptance_c10";
  fs::remove_all(work);
  fs::create_directories(work);

  // small but complete dataset + manifest
  const RawData raw = test::synthetic_regression(120, 3, 555);
  {
    std::ofstream csv(work / "toy.csv");
    for (std::size_t i = 0; i < raw.x.rows; ++i) {
      for (std::size_t j = 0; j < raw.x.cols; ++j) csv << raw.x(i, j) << ",";
      csv << raw.y_real[i] << "\n";
    }
  }
  RunManifest manifest;
  manifest.dataset.path = (work / "toy.csv").string();
  manifest.split_seed = 5;
  manifest.run.chains = 4;
  manifest.run.training.ensemble_size = 4;
  manifest.run.training.max_epochs = 80;
  manifest.run.sampling_steps = 600;
  manifest.run.thinning_interval = 3;
  manifest.run.tuning.phase1_steps = 600;
  manifest.run.tuning.phase2_steps = 200;
  manifest.run.tuning.phase3_steps = 200;
  manifest.run.base_seed = 12;
  manifest.write((work / "manifest.txt").string());

  auto invoke = [&](int workers, const std::string& out) {
    std::ostringstream cmd;
    cmd << '"' << cli << '"' << " run --config " << (work / "manifest.txt")
        << " --workers " << workers << " --out " << (work / out) << " > "
        << (work / (out + ".stdout")) << " 2>&1";
    return std::system(cmd.str().c_str());
  };
  if (invoke(1, "w1") != 0) return {false, "run with --workers 1 exited nonzero"};
  if (invoke(2, "w2") != 0) return {false, "run with --workers 2 exited nonzero"};

  std::ostringstream detail;
  bool pass = true;
  for (const char* name : {"samples.mile", "metrics.txt", "coverage.csv",
                           "diagnostics.txt", "layers.csv", "manifest.txt"}) {
    const std::string a = read_file(work / "w1" / name);
    const std::string b = read_file(work / "w2" / name);
    if (a.empty() || a != b) {
      pass = false;
      detail << name << " differs; ";
    }
  }
  if (pass) detail << "sample file and all reports byte-identical for 1 vs 2 workers";
  fs::remove_all(work);
  return {pass, detail.str()};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "Gaussian-target correctness of the tuned pipeline", criterion_gaussian_target},
      {2, "log-posterior gradient oracle", criterion_gradient_oracle},
      {3, "fixed gradient budget of 120000 per chain", criterion_budget},
      {4, "robustness: 400 chains, zero failures", criterion_robustness},
      {5, "Energy benchmark bands", criterion_energy_benchmark},
      {6, "ensemble beats the DE baseline on every split", criterion_ensemble_improvement},
      {7, "ESS estimator oracle", criterion_ess_oracle},
      {8, "integrator energy-error order", criterion_integrator_order},
      {9, "calibration self-consistency", criterion_calibration},
      {10, "bit-identical outputs across worker counts", criterion_determinism},
  };

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only") continue;
    selected.push_back(std::atoi(arg.c_str()));
  }

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %2d: %s — %s\n", outcome.pass ? "PASS" : "FAIL", c.id,
                c.title, outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  return failures;
}
