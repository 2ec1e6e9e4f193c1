#include <vector>

#include "mile/nn.hpp"

// Straightforward row-at-a-time implementations without blocking or OpenMP.
// These exist purely as oracles for the parallel kernels.

namespace mile::ref {

Matrix forward(const MlpArchitecture& arch, const ParamVector& params,
               const Matrix& inputs) {
  arch.validate();
  const auto& w = arch.layer_widths;
  const int layers = arch.num_affine_layers();
  Matrix cur = inputs;
  std::size_t off = 0;
  for (int l = 0; l < layers; ++l) {
    const auto nin = static_cast<std::size_t>(w[l]);
    const auto nout = static_cast<std::size_t>(w[l + 1]);
    Matrix next(cur.rows, nout);
    for (std::size_t i = 0; i < cur.rows; ++i) {
      for (std::size_t j = 0; j < nout; ++j) {
        double z = params[off + nin * nout + j];  // bias
        for (std::size_t k = 0; k < nin; ++k) z += cur(i, k) * params[off + k * nout + j];
        if (l + 1 < layers && z < 0.0) z = 0.0;
        next(i, j) = z;
      }
    }
    off += (nin + 1) * nout;
    cur = std::move(next);
  }
  return cur;
}

ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads) {
  arch.validate();
  const auto& w = arch.layer_widths;
  const int layers = arch.num_affine_layers();
  ParamVector grad(arch.param_count(), 0.0);

  for (std::size_t i = 0; i < inputs.rows; ++i) {
    // forward, keeping every layer's activations
    std::vector<std::vector<double>> acts(layers + 1);
    acts[0].assign(inputs.row(i), inputs.row(i) + inputs.cols);
    std::size_t off = 0;
    for (int l = 0; l < layers; ++l) {
      const auto nin = static_cast<std::size_t>(w[l]);
      const auto nout = static_cast<std::size_t>(w[l + 1]);
      acts[l + 1].assign(nout, 0.0);
      for (std::size_t j = 0; j < nout; ++j) {
        double z = params[off + nin * nout + j];
        for (std::size_t k = 0; k < nin; ++k) z += acts[l][k] * params[off + k * nout + j];
        if (l + 1 < layers && z < 0.0) z = 0.0;
        acts[l + 1][j] = z;
      }
      off += (nin + 1) * nout;
    }

    // backward
    std::vector<double> delta(output_grads.row(i), output_grads.row(i) + output_grads.cols);
    for (int l = layers - 1; l >= 0; --l) {
      const auto nin = static_cast<std::size_t>(w[l]);
      const auto nout = static_cast<std::size_t>(w[l + 1]);
      off -= (nin + 1) * nout;
      for (std::size_t j = 0; j < nout; ++j) grad[off + nin * nout + j] += delta[j];
      std::vector<double> prev(nin, 0.0);
      for (std::size_t k = 0; k < nin; ++k) {
        for (std::size_t j = 0; j < nout; ++j) {
          grad[off + k * nout + j] += acts[l][k] * delta[j];
          prev[k] += params[off + k * nout + j] * delta[j];
        }
        if (l > 0 && !(acts[l][k] > 0.0)) prev[k] = 0.0;
      }
      delta = std::move(prev);
    }
  }
  return grad;
}

}  // namespace mile::ref
