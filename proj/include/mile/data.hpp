#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mile/posterior.hpp"

namespace mile {

enum class TaskKind { Regression, Classification };

struct DatasetSpec {
  std::string path;
  int target_column = -1;  // -1: last column
  TaskKind task = TaskKind::Regression;
  char delimiter = ',';
  enum class Header { Auto, Yes, No } header = Header::Auto;

  bool operator==(const DatasetSpec&) const = default;
};

struct Standardization {
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;
  std::vector<int> constant_features;  // scale-1 fallbacks, reported as warnings

  bool operator==(const Standardization&) const = default;
};

/// Parsed rows before splitting. String-valued feature columns arrive
/// one-hot encoded; classification targets are label-coded by first appearance.
struct RawData {
  Matrix x;
  std::vector<double> y_real;
  std::vector<int> y_class;
  int num_classes = 0;
  std::vector<std::string> class_names;
};

struct SplitData {
  TaskKind task = TaskKind::Regression;
  Dataset train;
  Dataset val;
  Dataset test;
  int num_classes = 0;
  Standardization standardization;
};

/// Reads a delimited text file per the spec. Numeric feature columns must
/// parse in every row (failures report row and column); columns whose first
/// data cell is non-numeric are treated as categorical and one-hot encoded.
RawData parse_delimited(const DatasetSpec& spec);

/// Seeded shuffle, 70/10/20 split, then z-scoring of features (and of
/// regression targets) using train-split statistics only.
SplitData split_and_standardize(const RawData& raw, TaskKind task, std::uint64_t seed);

SplitData load_and_split(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace mile
