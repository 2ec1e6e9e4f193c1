#include <doctest.h>

#include <cmath>

#include "mile/ensemble.hpp"
#include "mile/optimizer.hpp"
#include "mile/rng.hpp"
#include "support/testutil.hpp"

using namespace mile;

namespace {

// y = slope x + intercept + noise, distributional head [1, 2]
PosteriorModel linear_model(std::size_t n, double slope, double intercept, double noise,
                            std::uint64_t seed) {
  PosteriorModel m;
  m.arch.layer_widths = {1, 2};
  m.likelihood.kind = LikelihoodKind::GaussianDistributional;
  Rng rng(seed);
  m.train.x = Matrix(n, 1);
  m.train.y_real.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = uniform_range(rng, -2.0, 2.0);
    m.train.x(i, 0) = x;
    m.train.y_real[i] = slope * x + intercept + noise * standard_normal(rng);
  }
  return m;
}

Dataset linear_val(std::size_t n, double slope, double intercept, double noise,
                   std::uint64_t seed) {
  PosteriorModel m = linear_model(n, slope, intercept, noise, seed);
  return m.train;
}

}  // namespace

TEST_CASE("adamw_step basics") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;

  ParamVector params{1.0, -2.0};
  AdamState state(2);
  adamw_step(params, state, {0.0, 0.0}, cfg);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);

  // decoupled decay with zero gradient shrinks by exactly lr * wd * theta
  cfg.weight_decay = 1e-2;
  ParamVector p2{2.0, -4.0};
  AdamState s2(2);
  adamw_step(p2, s2, {0.0, 0.0}, cfg);
  CHECK(p2[0] == doctest::Approx(2.0 * (1.0 - cfg.learning_rate * 1e-2)).epsilon(1e-15));
  CHECK(p2[1] == doctest::Approx(-4.0 * (1.0 - cfg.learning_rate * 1e-2)).epsilon(1e-15));

  // hand-executed single step from zero moments
  cfg.weight_decay = 0.0;
  ParamVector p3{0.5};
  AdamState s3(1);
  const double g = 0.3;
  adamw_step(p3, s3, {g}, cfg);
  // m_hat = g, v_hat = g^2 after bias correction at t = 1
  const double expected = 0.5 - cfg.learning_rate * g / (std::abs(g) + cfg.eps);
  CHECK(p3[0] == doctest::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(adamw_step(p3, s3, {std::nan("")}, cfg), Error);
}

TEST_CASE("train_member recovers a least-squares fit") {
  const double slope = 1.7;
  const double intercept = -0.4;
  PosteriorModel model = linear_model(80, slope, intercept, 0.05, 1);
  const Dataset val = linear_val(20, slope, intercept, 0.05, 2);

  TrainConfig cfg;
  cfg.patience = 200;
  cfg.max_epochs = 20000;
  const ParamVector theta = train_member(model, val, cfg, 11);

  // closed-form least squares on the training rows
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(model.train.size());
  for (std::size_t i = 0; i < model.train.size(); ++i) {
    const double x = model.train.x(i, 0);
    const double y = model.train.y_real[i];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double ls_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double ls_intercept = (sy - ls_slope * sx) / n;

  // location head: mu(x) = W[0][0] x + b[0]
  CHECK(std::abs(theta[0] - ls_slope) < 0.05 * std::abs(ls_slope));
  CHECK(std::abs(theta[2] - ls_intercept) < 0.05 * std::abs(ls_slope));
}

TEST_CASE("early stopping semantics") {
  PosteriorModel model = linear_model(40, 1.0, 0.0, 0.1, 3);
  const Dataset val = linear_val(12, 1.0, 0.0, 0.1, 4);

  TrainConfig cfg;
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);

  // a huge learning rate ruins epoch 1; patience = 1 stops immediately and the
  // init (the best seen) comes back
  cfg.patience = 1;
  cfg.learning_rate = 100.0;
  cfg.max_epochs = 500;
  TrainStats stats;
  const ParamVector theta = train_member(model, val, cfg, 5, &stats);
  CHECK(stats.epochs_run == 1);
  CHECK(theta == init_params(model.arch, 5));
}

TEST_CASE("training improves on the initialization and is deterministic") {
  PosteriorModel model = linear_model(60, -0.8, 0.2, 0.1, 7);
  const Dataset val = linear_val(15, -0.8, 0.2, 0.1, 8);
  TrainConfig cfg;

  const ParamVector a = train_member(model, val, cfg, 21);
  const ParamVector b = train_member(model, val, cfg, 21);
  CHECK(a == b);

  CHECK(mean_nll(model, val, a) <= mean_nll(model, val, init_params(model.arch, 21)));
}

TEST_CASE("train_ensemble: distinct members, determinism across worker counts") {
  PosteriorModel model = linear_model(50, 0.5, 0.1, 0.2, 9);
  const Dataset val = linear_val(12, 0.5, 0.1, 0.2, 10);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.ensemble_size = 12;

  set_max_workers(2);
  const DeepEnsemble ens = train_ensemble(model, val, cfg, 100);
  REQUIRE(ens.size() == 12);
  for (int i = 0; i < ens.size(); ++i)
    for (int j = i + 1; j < ens.size(); ++j) {
      double dist = 0.0;
      for (std::size_t p = 0; p < ens.members[i].size(); ++p) {
        const double r = ens.members[i][p] - ens.members[j][p];
        dist += r * r;
      }
      CHECK(dist > 0.0);
    }

  set_max_workers(1);
  const DeepEnsemble serial = train_ensemble(model, val, cfg, 100);
  set_max_workers(0);
  CHECK(serial.members == ens.members);

  // K = 1 reduces to train_member
  TrainConfig single = cfg;
  single.ensemble_size = 1;
  const DeepEnsemble one = train_ensemble(model, val, single, 100);
  CHECK(one.members[0] == train_member(model, val, single, 100));
}

TEST_CASE("ensemble mixture beats the average member (Jensen)") {
  PosteriorModel model = linear_model(120, 1.2, -0.3, 0.15, 13);
  const Dataset heldout = linear_val(40, 1.2, -0.3, 0.15, 14);
  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.ensemble_size = 6;
  const DeepEnsemble ens = train_ensemble(model, heldout, cfg, 3);

  const PosteriorSamples all = ensemble_as_samples(ens, model.arch);
  PredictOptions opts;
  const PredictiveSummary mix = predict(model, all, heldout.x, &heldout, opts);

  double member_mean_lppd = 0.0;
  for (int k = 0; k < ens.size(); ++k) {
    DeepEnsemble one;
    one.members = {ens.members[k]};
    one.learning_rate = ens.learning_rate;
    const PosteriorSamples ps = ensemble_as_samples(one, model.arch);
    const PredictiveSummary single = predict(model, ps, heldout.x, &heldout, opts);
    double lppd = 0.0;
    for (double v : single.log_density) lppd += v;
    member_mean_lppd += lppd / static_cast<double>(heldout.size());
  }
  member_mean_lppd /= ens.size();

  double mix_lppd = 0.0;
  for (double v : mix.log_density) mix_lppd += v;
  mix_lppd /= static_cast<double>(heldout.size());

  CHECK(mix_lppd >= member_mean_lppd - 1e-12);

  // per-point mixture dominance as well
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    std::vector<double> ld;
    for (int k = 0; k < ens.size(); ++k) {
      const std::vector<double> x{heldout.x(i, 0)};
      ld.push_back(predictive_log_density(model, ens.members[k], x, heldout.y_real[i]));
    }
    CHECK(mixture_log_density(ld) >= test::mean_of(ld) - 1e-12);
  }
}
