// Throughput comparison of the OpenMP kernels against the serial reference,
// plus the end-to-end sampler step rate on a Gaussian target.

#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "mile/mclmc.hpp"
#include "mile/posterior.hpp"
#include "mile/rng.hpp"
#include "mile/targets.hpp"

using namespace mile;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double rate_per_second(F&& body, int iterations) {
  // one warm-up call, then timed repetitions
  body();
  const double t0 = now_seconds();
  for (int i = 0; i < iterations; ++i) body();
  return iterations / (now_seconds() - t0);
}

PosteriorModel make_model(std::size_t rows, std::uint64_t seed) {
  PosteriorModel model;
  model.arch.layer_widths = {8, 16, 16, 2};
  model.likelihood.kind = LikelihoodKind::GaussianDistributional;
  Rng rng(seed);
  model.train.x = Matrix(rows, 8);
  for (auto& v : model.train.x.data) v = standard_normal(rng);
  model.train.y_real.resize(rows);
  for (auto& v : model.train.y_real) v = standard_normal(rng);
  return model;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mile_bench: OpenMP kernels vs the serial reference"};
  std::vector<std::size_t> row_sizes{256, 1024, 4096};
  int iterations = 50;
  app.add_option("--rows", row_sizes, "training-set sizes to benchmark");
  app.add_option("--iters", iterations, "timed repetitions per cell");
  CLI11_PARSE(app, argc, argv);

  const int hw_threads = omp_get_max_threads();
  std::printf("threads available: %d\n\n", hw_threads);
  std::printf("%-22s %8s %14s %14s %14s %9s\n", "kernel", "rows", "serial-ref/s",
              "omp(1)/s", "omp(max)/s", "speedup");

  for (const std::size_t rows : row_sizes) {
    const PosteriorModel model = make_model(rows, 1);
    const ParamVector theta = init_params(model.arch, 2);
    Rng rng(3);
    Matrix gout(rows, 2);
    for (auto& v : gout.data) v = standard_normal(rng);

    // forward
    const double fwd_ref = rate_per_second(
        [&] { ref::forward(model.arch, theta, model.train.x); }, iterations);
    set_max_workers(1);
    const double fwd_one = rate_per_second(
        [&] { forward(model.arch, theta, model.train.x); }, iterations);
    set_max_workers(0);
    const double fwd_max = rate_per_second(
        [&] { forward(model.arch, theta, model.train.x); }, iterations);
    std::printf("%-22s %8zu %14.1f %14.1f %14.1f %8.2fx\n", "forward", rows, fwd_ref,
                fwd_one, fwd_max, fwd_max / fwd_ref);

    // backprop
    const double bwd_ref = rate_per_second(
        [&] { ref::backprop(model.arch, theta, model.train.x, gout); }, iterations);
    set_max_workers(1);
    NnWorkspace ws;
    const double bwd_one = rate_per_second(
        [&] { backprop(model.arch, theta, model.train.x, gout, ws); }, iterations);
    set_max_workers(0);
    const double bwd_max = rate_per_second(
        [&] { backprop(model.arch, theta, model.train.x, gout, ws); }, iterations);
    std::printf("%-22s %8zu %14.1f %14.1f %14.1f %8.2fx\n", "backprop", rows, bwd_ref,
                bwd_one, bwd_max, bwd_max / bwd_ref);

    // fused posterior gradient (the sampler hot path)
    ParamVector grad(theta.size());
    set_max_workers(1);
    const double fused_one = rate_per_second(
        [&] { posterior_value_and_grad(model, theta, ws, grad); }, iterations);
    set_max_workers(0);
    const double fused_max = rate_per_second(
        [&] { posterior_value_and_grad(model, theta, ws, grad); }, iterations);
    std::printf("%-22s %8zu %14s %14.1f %14.1f %8.2fx\n", "posterior gradient", rows,
                "-", fused_one, fused_max, fused_max / fused_one);
    std::printf("\n");
  }

  // sampler step rate on the analytic testbed
  for (const std::size_t d : {100ul, 1000ul}) {
    IsotropicGaussianTarget gauss(d);
    Rng rng(5);
    std::vector<double> start(d, 0.0);
    ChainState state = make_chain_state(gauss, start, rng);
    const KernelParams params{0.2, std::sqrt(static_cast<double>(d))};
    const double steps = rate_per_second(
        [&] {
          for (int i = 0; i < 100; ++i) kernel_step(state, params, gauss, rng);
        },
        20);
    std::printf("gaussian kernel steps/s (d=%zu): %.0f\n", d, steps * 100.0);
  }

  // BNN-sized chain throughput: 2 gradient evaluations per step
  {
    const PosteriorModel model = make_model(537, 7);  // Energy-like training split
    PosteriorTarget target(model);
    Rng rng(8);
    ChainState state = make_chain_state(target, init_params(model.arch, 9), rng);
    const KernelParams params{0.01, 20.0};
    const double steps = rate_per_second(
        [&] {
          for (int i = 0; i < 50; ++i) kernel_step(state, params, target, rng);
        },
        10);
    std::printf("bnn kernel steps/s (n=537, d=%zu): %.0f\n",
                model.arch.param_count(), steps * 50.0);
  }
  return 0;
}
