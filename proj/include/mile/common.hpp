#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mile {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool operator==(const Matrix&) const = default;
};

enum class ErrorKind { Config, Data, Run, AllChainsFailed };

/// Library-level error carrying a coarse category used for CLI exit codes.
struct Error : std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

/// Upper bound on the size of worker teams spawned by parallel regions.
/// 0 restores the OpenMP default. Results never depend on this value.
void set_max_workers(int n);
int max_workers();

/// Rows are processed in fixed blocks of this size so that reductions sum
/// per-block partials in index order, independent of the number of threads.
inline constexpr std::size_t kRowBlock = 64;

inline std::size_t num_row_blocks(std::size_t rows) {
  return (rows + kRowBlock - 1) / kRowBlock;
}

}  // namespace mile
