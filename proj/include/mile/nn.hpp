#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mile/common.hpp"

namespace mile {

/// Flat parameter vector: per layer, the (fan_in x fan_out) weight block in
/// row-major order followed by the fan_out bias entries.
using ParamVector = std::vector<double>;

enum class Activation { ReLU };

/// Fully connected network topology. layer_widths runs input, hidden..., output;
/// hidden layers get the activation, the output layer is affine.
struct MlpArchitecture {
  std::vector<int> layer_widths;
  Activation activation = Activation::ReLU;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  int num_affine_layers() const { return static_cast<int>(layer_widths.size()) - 1; }

  std::size_t param_count() const;
  /// Size of the per-row activation stack (all post-affine layers, input excluded).
  std::size_t activation_count() const;
  int max_width() const;

  void validate() const;  // throws Error(Config) on malformed widths

  bool operator==(const MlpArchitecture&) const = default;
};

struct LayerSlice {
  int layer = 0;  // affine layer index, 0-based
  std::size_t weight_begin = 0;
  std::size_t weight_end = 0;
  std::size_t bias_begin = 0;
  std::size_t bias_end = 0;
};

/// Disjoint, ordered weight/bias ranges covering [0, d) exactly.
std::vector<LayerSlice> layer_slices(const MlpArchitecture& arch);

/// He-uniform weights (bound sqrt(6/fan_in)), zero biases. Deterministic in seed.
ParamVector init_params(const MlpArchitecture& arch, std::uint64_t seed);

namespace detail {

// Row primitives shared by every evaluation path (standalone ops, the fused
// posterior gradient, prediction). Keeping them out of line guarantees that
// serial and OpenMP dispatch run the identical machine code, which is what
// makes results independent of the worker count.

/// Forward one input row; writes the post-activation stack (activation_count entries).
void forward_row(const MlpArchitecture& arch, const double* params, const double* x,
                 double* acts);

/// Reverse pass for one row given d(scalar)/d(outputs); accumulates into grad.
/// `acts` must come from forward_row on the same (params, x); `delta` is scratch
/// of size >= max_width.
void backward_row(const MlpArchitecture& arch, const double* params, const double* x,
                  const double* acts, const double* output_grad, double* grad,
                  double* delta);

}  // namespace detail

/// Scratch reused across evaluations by one owner (chain/worker).
struct NnWorkspace {
  std::vector<double> block_grads;   // num_blocks x d partial gradients
  std::vector<double> block_values;  // num_blocks partial scalars
  std::vector<double> row_scratch;   // per-call activation + delta buffers
};

/// Batched forward pass, rows independent (parallelized over row blocks).
Matrix forward(const MlpArchitecture& arch, const ParamVector& params,
               const Matrix& inputs);

/// Gradient of sum_i <f(x_i; theta), g_i> with respect to theta. Exact; the
/// ReLU subgradient at 0 is taken as 0. Row contributions are reduced over
/// fixed blocks so the result does not depend on thread count.
ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads);

ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads,
                     NnWorkspace& ws);

namespace ref {

/// Plain serial implementations kept as the reference the parallel kernels are
/// tested and benchmarked against.
Matrix forward(const MlpArchitecture& arch, const ParamVector& params,
               const Matrix& inputs);
ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads);

}  // namespace ref

}  // namespace mile
