#include <doctest.h>

#include <cmath>

#include "mile/diagnostics.hpp"
#include "mile/rng.hpp"
#include "support/testutil.hpp"

using namespace mile;

namespace {

PosteriorSamples synthetic_samples(std::size_t chains, std::size_t s, std::size_t d,
                                   const std::vector<double>& chain_means, double sigma,
                                   std::uint64_t seed) {
  PosteriorSamples out;
  out.num_chains = chains;
  out.samples_per_chain = s;
  out.dim = d;
  out.data.resize(chains * s * d);
  out.reports.resize(chains);
  Rng rng(seed);
  for (std::size_t k = 0; k < chains; ++k) {
    out.reports[k].chain_id = static_cast<int>(k);
    out.reports[k].retained_samples = s;
    for (std::size_t t = 0; t < s; ++t)
      for (std::size_t p = 0; p < d; ++p)
        out.chain_sample_mut(k, t)[p] = chain_means[k] + sigma * standard_normal(rng);
  }
  return out;
}

}  // namespace

TEST_CASE("chainwise split Rhat: i.i.d., drifting, constant") {
  // four segments from the same normal stay near 1
  Rng rng(1);
  Matrix iid(4000, 2);
  for (auto& v : iid.data) v = standard_normal(rng);
  for (double r : chainwise_split_rhat(iid, 4)) {
    CHECK(r >= 1.0 - 1e-3);
    CHECK(r < 1.01);
  }

  // segment means 0,0,1,1 with tiny within-variance blow up
  Matrix drift(400, 1);
  for (std::size_t t = 0; t < 400; ++t)
    drift(t, 0) = (t < 200 ? 0.0 : 1.0) + 1e-3 * standard_normal(rng);
  const auto r = chainwise_split_rhat(drift, 4);
  CHECK(r[0] > 1.1);

  // constant chain reports the sentinel, not NaN
  Matrix constant(64, 1, 3.0);
  const auto rc = chainwise_split_rhat(constant, 4);
  CHECK(rc[0] == kDegenerateRhat);

  Matrix tiny(7, 1);
  CHECK_THROWS_AS(chainwise_split_rhat(tiny, 4), Error);
}

TEST_CASE("split Rhat is invariant under positive affine maps") {
  Rng rng(2);
  Matrix trace(1024, 1);
  const auto series = test::ar1_series(0.7, 1024, 3);
  for (std::size_t t = 0; t < 1024; ++t) trace(t, 0) = series[t];
  const auto base = chainwise_split_rhat(trace, 4);
  Matrix mapped(1024, 1);
  for (std::size_t t = 0; t < 1024; ++t) mapped(t, 0) = -3.0 + 2.5 * series[t];
  const auto scaled = chainwise_split_rhat(mapped, 4);
  CHECK(std::abs(base[0] - scaled[0]) < 1e-8);
}

TEST_CASE("layer variances: trivial and synthetic generative cases") {
  MlpArchitecture arch;
  arch.layer_widths = {2, 3, 2};
  const std::size_t d = arch.param_count();
  const auto slices = layer_slices(arch);

  // identical chains: between = 0
  PosteriorSamples same = synthetic_samples(3, 50, d, {0.0, 0.0, 0.0}, 1.0, 4);
  for (std::size_t k = 1; k < 3; ++k)
    std::copy(same.data.begin(), same.data.begin() + 50 * d,
              same.data.begin() + k * 50 * d);
  same.arch_widths = arch.layer_widths;
  const LayerVariances lv = layer_variances(same, slices);
  for (double b : lv.between) CHECK(b == doctest::Approx(0.0));

  // chains frozen at distinct constants: within = 0, between = Var(c_k)
  PosteriorSamples frozen = synthetic_samples(3, 40, d, {0.0, 1.0, 2.0}, 0.0, 5);
  const LayerVariances fv = layer_variances(frozen, slices);
  for (double w : fv.within) CHECK(w == doctest::Approx(0.0));
  for (double b : fv.between) CHECK(b == doctest::Approx(1.0));  // var of {0,1,2}

  // generative check: between ~ Var(mu_k), within ~ sigma^2
  const std::vector<double> mus{-0.8, -0.2, 0.1, 0.4, 0.9, -0.5, 0.3, 0.7};
  PosteriorSamples gen = synthetic_samples(8, 10000, d, mus, 0.7, 6);
  const LayerVariances gv = layer_variances(gen, slices);
  const double expected_between = test::variance_of(mus);
  for (std::size_t l = 0; l < gv.between.size(); ++l) {
    CHECK(gv.between[l] == doctest::Approx(expected_between).epsilon(0.10));
    CHECK(gv.within[l] == doctest::Approx(0.49).epsilon(0.10));
  }

  // between + within tracks the total pooled variance
  std::vector<double> pooled;
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t t = 0; t < 1000; ++t) pooled.push_back(gen.chain_sample(k, t)[0]);
  const double total = test::variance_of(pooled);
  CHECK(gv.between[0] + gv.within[0] == doctest::Approx(total).epsilon(0.10));

  PosteriorSamples lone = synthetic_samples(1, 40, d, {0.0}, 1.0, 7);
  CHECK_THROWS_AS(layer_variances(lone, slices), Error);
}

TEST_CASE("pooled ESS: i.i.d. chains, constant-chain isolation, thinning gain") {
  const std::size_t d = 3;
  PosteriorSamples iid = synthetic_samples(4, 2000, d, {0.0, 0.0, 0.0, 0.0}, 1.0, 8);
  const PooledEss pe = pooled_ess(iid);
  for (std::size_t p = 0; p < d; ++p) {
    CHECK(pe.pooled[p] > 0.8 * 4 * 2000);
    CHECK(pe.pooled[p] <= 1.2 * 4 * 2000);
  }

  // one frozen chain is flagged; the others are unaffected
  PosteriorSamples mixed = synthetic_samples(2, 1000, 1, {0.0, 0.0}, 1.0, 9);
  for (std::size_t t = 0; t < 1000; ++t) mixed.chain_sample_mut(1, t)[0] = 2.5;
  const PooledEss pm = pooled_ess(mixed);
  CHECK(pm.degenerate[0] == 1);
  CHECK(pm.per_chain(0, 0) > 800.0);
  CHECK(pm.per_chain(1, 0) == doctest::Approx(1000.0));

  // thinning a strongly autocorrelated chain raises ESS per retained sample
  const auto series = test::ar1_series(0.95, 20000, 10);
  PosteriorSamples full = synthetic_samples(1, 20000, 1, {0.0}, 1.0, 11);
  for (std::size_t t = 0; t < 20000; ++t) full.chain_sample_mut(0, t)[0] = series[t];
  PosteriorSamples thin = synthetic_samples(1, 2000, 1, {0.0}, 1.0, 12);
  for (std::size_t t = 0; t < 2000; ++t)
    thin.chain_sample_mut(0, t)[0] = series[10 * t];
  const double full_frac = pooled_ess(full).pooled[0] / 20000.0;
  const double thin_frac = pooled_ess(thin).pooled[0] / 2000.0;
  CHECK(thin_frac > full_frac);
}

TEST_CASE("full diagnostics report with layer aggregation") {
  MlpArchitecture arch;
  arch.layer_widths = {3, 4, 2};
  const std::size_t d = arch.param_count();
  PosteriorSamples s = synthetic_samples(4, 800, d, {-0.5, 0.0, 0.5, 1.0}, 0.3, 13);
  s.arch_widths = arch.layer_widths;
  const DiagnosticsReport rep = compute_diagnostics(s);
  CHECK(rep.chains == 4);
  CHECK(rep.parameters == d);
  CHECK(rep.rhat_summary.mean >= 1.0 - 1e-3);
  CHECK(rep.rhat_summary.mean < 1.05);
  CHECK(rep.layer_ids.size() == 2);
  CHECK(rep.layers.between.size() == 2);
  for (double e : rep.layer_ess_mean) CHECK(e > 0.0);

  // i.i.d. segments rarely exceed 1.05
  std::size_t above = 0, finite = 0;
  for (std::size_t k = 0; k < s.num_chains; ++k)
    for (std::size_t p = 0; p < d; ++p) {
      const double r = rep.rhat_per_chain(k, p);
      if (r == kDegenerateRhat) continue;
      ++finite;
      if (r > 1.05) ++above;
    }
  CHECK(finite > 0);
  CHECK(static_cast<double>(above) / static_cast<double>(finite) < 0.05);
}
