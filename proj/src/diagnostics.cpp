#include "mile/diagnostics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mile/tuning.hpp"

namespace mile {

std::vector<double> chainwise_split_rhat(const Matrix& chain_trace, int splits) {
  const std::size_t s = chain_trace.rows;
  const std::size_t dims = chain_trace.cols;
  if (splits < 2) throw Error(ErrorKind::Run, "split Rhat needs at least 2 segments");
  const auto m = static_cast<std::size_t>(splits);
  if (s < 2 * m) throw Error(ErrorKind::Run, "split Rhat needs at least 2 samples per segment");
  const std::size_t seg = s / m;  // remainder truncated

  std::vector<double> rhat(dims);
  const bool par = dims > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t dim = 0; dim < dims; ++dim) {
    thread_local std::vector<double> means, vars;
    means.assign(m, 0.0);
    vars.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double mean = 0.0;
      for (std::size_t t = 0; t < seg; ++t) mean += chain_trace(j * seg + t, dim);
      mean /= static_cast<double>(seg);
      double v = 0.0;
      for (std::size_t t = 0; t < seg; ++t) {
        const double r = chain_trace(j * seg + t, dim) - mean;
        v += r * r;
      }
      means[j] = mean;
      vars[j] = v / static_cast<double>(seg - 1);
    }
    double grand = 0.0;
    for (double x : means) grand += x;
    grand /= static_cast<double>(m);
    double between = 0.0;
    for (double x : means) between += (x - grand) * (x - grand);
    between *= static_cast<double>(seg) / static_cast<double>(m - 1);
    double within = 0.0;
    for (double x : vars) within += x;
    within /= static_cast<double>(m);

    if (!(within > 0.0)) {
      rhat[dim] = kDegenerateRhat;
    } else {
      const auto sd = static_cast<double>(seg);
      rhat[dim] = std::sqrt((sd - 1.0) / sd + between / (sd * within));
    }
  }
  return rhat;
}

LayerVariances layer_variances(const PosteriorSamples& samples,
                               const std::vector<LayerSlice>& slices) {
  const std::size_t s = samples.samples_per_chain;
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < samples.num_chains; ++k)
    if (!samples.reports[k].failed) live.push_back(k);
  if (live.size() < 2)
    throw Error(ErrorKind::Run, "layer variances need at least 2 successful chains");

  const std::size_t d = samples.dim;
  std::vector<double> within(d, 0.0), between(d, 0.0);
  std::vector<double> chain_mean(live.size());

  for (std::size_t p = 0; p < d; ++p) {
    for (std::size_t c = 0; c < live.size(); ++c) {
      const std::size_t k = live[c];
      double mean = 0.0;
      for (std::size_t t = 0; t < s; ++t) mean += samples.chain_sample(k, t)[p];
      mean /= static_cast<double>(s);
      double v = 0.0;
      for (std::size_t t = 0; t < s; ++t) {
        const double r = samples.chain_sample(k, t)[p] - mean;
        v += r * r;
      }
      chain_mean[c] = mean;
      within[p] += s > 1 ? v / static_cast<double>(s - 1) : 0.0;
    }
    within[p] /= static_cast<double>(live.size());
    double grand = 0.0;
    for (double x : chain_mean) grand += x;
    grand /= static_cast<double>(live.size());
    for (double x : chain_mean) between[p] += (x - grand) * (x - grand);
    between[p] /= static_cast<double>(live.size() - 1);
  }

  LayerVariances out;
  out.between.resize(slices.size());
  out.within.resize(slices.size());
  out.between_max.resize(slices.size());
  out.within_max.resize(slices.size());
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& sl = slices[l];
    double bsum = 0.0, wsum = 0.0, bmax = 0.0, wmax = 0.0;
    std::size_t count = 0;
    auto absorb = [&](std::size_t begin, std::size_t end) {
      for (std::size_t p = begin; p < end; ++p) {
        bsum += between[p];
        wsum += within[p];
        bmax = std::max(bmax, between[p]);
        wmax = std::max(wmax, within[p]);
        ++count;
      }
    };
    absorb(sl.weight_begin, sl.weight_end);
    absorb(sl.bias_begin, sl.bias_end);
    out.between[l] = bsum / static_cast<double>(count);
    out.within[l] = wsum / static_cast<double>(count);
    out.between_max[l] = bmax;
    out.within_max[l] = wmax;
  }
  return out;
}

PooledEss pooled_ess(const PosteriorSamples& samples) {
  const std::size_t d = samples.dim;
  PooledEss out;
  out.per_chain = Matrix(samples.num_chains, d);
  out.pooled.assign(d, 0.0);
  out.degenerate.assign(d, 0);

  Matrix trace(samples.samples_per_chain, d);
  for (std::size_t k = 0; k < samples.num_chains; ++k) {
    if (samples.reports[k].failed) continue;
    for (std::size_t t = 0; t < samples.samples_per_chain; ++t) {
      const auto row = samples.chain_sample(k, t);
      std::copy(row.begin(), row.end(), trace.row(t));
    }
    const EssResult res = ess_per_dimension(trace);
    for (std::size_t p = 0; p < d; ++p) {
      out.per_chain(k, p) = res.ess[p];
      out.pooled[p] += res.ess[p];
      if (res.degenerate[p]) out.degenerate[p] = 1;
    }
  }
  return out;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  a.mean = sum / static_cast<double>(sorted.size());
  a.max = sorted.back();
  auto quant = [&](double q) {
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
  };
  a.q05 = quant(0.05);
  a.median = quant(0.5);
  a.q95 = quant(0.95);
  return a;
}

DiagnosticsReport compute_diagnostics(const PosteriorSamples& samples) {
  if (samples.successful_chains() == 0)
    throw Error(ErrorKind::Run, "diagnostics need at least one successful chain");
  DiagnosticsReport report;
  report.chains = samples.num_chains;
  report.samples_per_chain = samples.samples_per_chain;
  report.parameters = samples.dim;

  report.rhat_per_chain = Matrix(samples.num_chains, samples.dim);
  Matrix trace(samples.samples_per_chain, samples.dim);
  std::vector<double> finite_rhat;
  for (std::size_t k = 0; k < samples.num_chains; ++k) {
    if (samples.reports[k].failed) {
      for (std::size_t p = 0; p < samples.dim; ++p)
        report.rhat_per_chain(k, p) = kDegenerateRhat;
      continue;
    }
    for (std::size_t t = 0; t < samples.samples_per_chain; ++t) {
      const auto row = samples.chain_sample(k, t);
      std::copy(row.begin(), row.end(), trace.row(t));
    }
    const std::vector<double> rhat = chainwise_split_rhat(trace, 4);
    for (std::size_t p = 0; p < samples.dim; ++p) {
      report.rhat_per_chain(k, p) = rhat[p];
      if (rhat[p] == kDegenerateRhat)
        ++report.degenerate_rhat_count;
      else
        finite_rhat.push_back(rhat[p]);
    }
  }
  report.rhat_summary = aggregate(finite_rhat);

  report.ess = pooled_ess(samples);
  report.ess_summary = aggregate(report.ess.pooled);

  if (!samples.arch_widths.empty()) {
    MlpArchitecture arch;
    arch.layer_widths = samples.arch_widths;
    const auto slices = layer_slices(arch);
    if (samples.successful_chains() >= 2) report.layers = layer_variances(samples, slices);
    report.layer_ids.resize(slices.size());
    report.layer_ess_mean.assign(slices.size(), 0.0);
    report.layer_rhat_mean.assign(slices.size(), 0.0);
    for (std::size_t l = 0; l < slices.size(); ++l) {
      report.layer_ids[l] = slices[l].layer;
      double esum = 0.0, rsum = 0.0;
      std::size_t ecount = 0, rcount = 0;
      auto absorb = [&](std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) {
          esum += report.ess.pooled[p];
          ++ecount;
          for (std::size_t k = 0; k < samples.num_chains; ++k) {
            const double r = report.rhat_per_chain(k, p);
            if (r != kDegenerateRhat) {
              rsum += r;
              ++rcount;
            }
          }
        }
      };
      absorb(slices[l].weight_begin, slices[l].weight_end);
      absorb(slices[l].bias_begin, slices[l].bias_end);
      report.layer_ess_mean[l] = ecount ? esum / static_cast<double>(ecount) : 0.0;
      report.layer_rhat_mean[l] = rcount ? rsum / static_cast<double>(rcount) : 0.0;
    }
  }
  return report;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_aggregate(std::ofstream& out, const std::string& prefix, const Aggregate& a) {
  out << prefix << "_mean = " << fmt17(a.mean) << "\n";
  out << prefix << "_max = " << fmt17(a.max) << "\n";
  out << prefix << "_q05 = " << fmt17(a.q05) << "\n";
  out << prefix << "_median = " << fmt17(a.median) << "\n";
  out << prefix << "_q95 = " << fmt17(a.q95) << "\n";
}

}  // namespace

void write_diagnostics_text(const std::string& path, const DiagnosticsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");
  out << "chains = " << report.chains << "\n";
  out << "samples_per_chain = " << report.samples_per_chain << "\n";
  out << "parameters = " << report.parameters << "\n";
  write_aggregate(out, "split_rhat", report.rhat_summary);
  out << "split_rhat_degenerate = " << report.degenerate_rhat_count << "\n";
  write_aggregate(out, "pooled_ess", report.ess_summary);
}

void write_layer_csv(const std::string& path, const DiagnosticsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot open " + path + " for writing");
  out << "layer,ess_mean,rhat_mean,between_var,within_var,between_var_max,within_var_max\n";
  for (std::size_t l = 0; l < report.layer_ids.size(); ++l) {
    out << report.layer_ids[l] << "," << fmt17(report.layer_ess_mean[l]) << ","
        << fmt17(report.layer_rhat_mean[l]);
    if (l < report.layers.between.size())
      out << "," << fmt17(report.layers.between[l]) << "," << fmt17(report.layers.within[l])
          << "," << fmt17(report.layers.between_max[l]) << ","
          << fmt17(report.layers.within_max[l]);
    else
      out << ",,,,";
    out << "\n";
  }
}

}  // namespace mile
