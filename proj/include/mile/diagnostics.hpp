#pragma once

#include <string>
#include <vector>

#include "mile/ensemble.hpp"
#include "mile/nn.hpp"

namespace mile {

/// Reported instead of NaN when within-segment variance vanishes.
inline constexpr double kDegenerateRhat = -1.0;

/// Potential-scale-reduction across `splits` contiguous equal segments of one
/// chain (remainder truncated): Rhat = sqrt((S'-1)/S' + B/(S' W)) on raw
/// traces, no rank normalization. Returns one value per trace column.
std::vector<double> chainwise_split_rhat(const Matrix& chain_trace, int splits = 4);

struct LayerVariances {
  std::vector<double> between;  // per layer; empty when only one chain
  std::vector<double> within;
  std::vector<double> between_max;
  std::vector<double> within_max;
};

/// Per-parameter between/within-chain variance decomposition aggregated per
/// layer (mean, with max alongside).
LayerVariances layer_variances(const PosteriorSamples& samples,
                               const std::vector<LayerSlice>& slices);

struct PooledEss {
  Matrix per_chain;                      // chains x parameters
  std::vector<double> pooled;            // summed over successful chains
  std::vector<std::uint8_t> degenerate;  // any chain flagged constant
};

/// Per-chain, per-parameter ESS of the thinned traces plus the pooled sum.
PooledEss pooled_ess(const PosteriorSamples& samples);

struct Aggregate {
  double mean = 0.0;
  double max = 0.0;
  double q05 = 0.0;
  double median = 0.0;
  double q95 = 0.0;
};

Aggregate aggregate(std::span<const double> values);

struct DiagnosticsReport {
  std::size_t chains = 0;
  std::size_t samples_per_chain = 0;
  std::size_t parameters = 0;
  Matrix rhat_per_chain;  // chains x parameters, sentinel for degenerate
  PooledEss ess;
  Aggregate rhat_summary;  // over finite (non-sentinel) entries
  Aggregate ess_summary;   // over pooled per-parameter ESS
  std::size_t degenerate_rhat_count = 0;
  // per-layer aggregation (empty when the parameter layout is unknown)
  std::vector<int> layer_ids;
  LayerVariances layers;
  std::vector<double> layer_ess_mean;
  std::vector<double> layer_rhat_mean;
};

DiagnosticsReport compute_diagnostics(const PosteriorSamples& samples);

void write_diagnostics_text(const std::string& path, const DiagnosticsReport& report);
void write_layer_csv(const std::string& path, const DiagnosticsReport& report);

}  // namespace mile
