#pragma once

#include <string>
#include <vector>

#include "mile/data.hpp"
#include "mile/ensemble.hpp"

namespace mile {

/// Complete, self-describing run description. Writing materializes every
/// default so archived manifests replay exactly; parse(write(m)) == m.
struct RunManifest {
  DatasetSpec dataset;
  std::uint64_t split_seed = 0;
  std::vector<int> hidden_widths{16, 16};
  double prior_variance = 1.0;
  RunConfig run;
  std::string output_dir = "out";
  // written back after a run so outputs are interpretable on the raw scale
  bool has_standardization = false;
  Standardization standardization;

  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);

  bool operator==(const RunManifest&) const = default;
};

}  // namespace mile
