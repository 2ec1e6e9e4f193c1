#include "mile/nn.hpp"

#include <omp.h>

#include <cmath>

#include "mile/rng.hpp"

namespace mile {

std::size_t MlpArchitecture::param_count() const {
  std::size_t d = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    d += static_cast<std::size_t>(layer_widths[l] + 1) * layer_widths[l + 1];
  return d;
}

std::size_t MlpArchitecture::activation_count() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_widths.size(); ++l) n += layer_widths[l];
  return n;
}

int MlpArchitecture::max_width() const {
  int m = 0;
  for (int w : layer_widths) m = w > m ? w : m;
  return m;
}

void MlpArchitecture::validate() const {
  if (layer_widths.size() < 2)
    throw Error(ErrorKind::Config, "architecture needs at least input and output widths");
  for (int w : layer_widths)
    if (w < 1) throw Error(ErrorKind::Config, "layer widths must be >= 1");
}

std::vector<LayerSlice> layer_slices(const MlpArchitecture& arch) {
  arch.validate();
  std::vector<LayerSlice> slices;
  std::size_t off = 0;
  for (int l = 0; l < arch.num_affine_layers(); ++l) {
    const auto nin = static_cast<std::size_t>(arch.layer_widths[l]);
    const auto nout = static_cast<std::size_t>(arch.layer_widths[l + 1]);
    LayerSlice s;
    s.layer = l;
    s.weight_begin = off;
    s.weight_end = off + nin * nout;
    s.bias_begin = s.weight_end;
    s.bias_end = s.bias_begin + nout;
    off = s.bias_end;
    slices.push_back(s);
  }
  return slices;
}

ParamVector init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector params(arch.param_count(), 0.0);
  Rng rng(seed);
  std::size_t off = 0;
  for (int l = 0; l < arch.num_affine_layers(); ++l) {
    const auto nin = static_cast<std::size_t>(arch.layer_widths[l]);
    const auto nout = static_cast<std::size_t>(arch.layer_widths[l + 1]);
    const double bound = std::sqrt(6.0 / static_cast<double>(nin));
    for (std::size_t i = 0; i < nin * nout; ++i)
      params[off + i] = uniform_range(rng, -bound, bound);
    off += nin * nout + nout;  // biases stay zero
  }
  return params;
}

namespace detail {

void forward_row(const MlpArchitecture& arch, const double* params, const double* x,
                 double* acts) {
  const auto& w = arch.layer_widths;
  const int layers = arch.num_affine_layers();
  const double* in = x;
  const double* p = params;
  double* out_cursor = acts;
  for (int l = 0; l < layers; ++l) {
    const int nin = w[l];
    const int nout = w[l + 1];
    const double* __restrict bias = p + static_cast<std::size_t>(nin) * nout;
    double* __restrict out = out_cursor;
    for (int j = 0; j < nout; ++j) out[j] = bias[j];
    for (int k = 0; k < nin; ++k) {
      const double xk = in[k];
      const double* __restrict wrow = p + static_cast<std::size_t>(k) * nout;
      for (int j = 0; j < nout; ++j) out[j] += xk * wrow[j];
    }
    if (l + 1 < layers) {
      for (int j = 0; j < nout; ++j) out[j] = out[j] > 0.0 ? out[j] : 0.0;
    }
    p = bias + nout;
    in = out;
    out_cursor += nout;
  }
}

void backward_row(const MlpArchitecture& arch, const double* params, const double* x,
                  const double* acts, const double* output_grad, double* grad,
                  double* delta) {
  const auto& w = arch.layer_widths;
  const int layers = arch.num_affine_layers();
  std::size_t param_end = 0;
  std::size_t act_end = 0;
  for (int l = 0; l < layers; ++l) {
    param_end += static_cast<std::size_t>(w[l] + 1) * w[l + 1];
    act_end += static_cast<std::size_t>(w[l + 1]);
  }

  // delta is split into two halves that alternate between layers
  const int maxw = arch.max_width();
  double* cur = delta;
  double* next = delta + maxw;
  for (int j = 0; j < w[layers]; ++j) cur[j] = output_grad[j];

  for (int l = layers - 1; l >= 0; --l) {
    const int nin = w[l];
    const int nout = w[l + 1];
    const std::size_t param_begin = param_end - static_cast<std::size_t>(nin + 1) * nout;
    const std::size_t act_begin = act_end - static_cast<std::size_t>(nout);
    const double* __restrict a_in = (l == 0) ? x : acts + (act_begin - nin);
    const double* __restrict wts = params + param_begin;
    double* __restrict gw = grad + param_begin;
    double* __restrict gb = gw + static_cast<std::size_t>(nin) * nout;
    const double* __restrict d_out = cur;
    double* __restrict d_in = next;

    for (int j = 0; j < nout; ++j) gb[j] += d_out[j];
    for (int k = 0; k < nin; ++k) {
      const double a = a_in[k];
      const double* __restrict wrow = wts + static_cast<std::size_t>(k) * nout;
      double* __restrict gwrow = gw + static_cast<std::size_t>(k) * nout;
      for (int j = 0; j < nout; ++j) gwrow[j] += a * d_out[j];
      // dot product with fixed pairwise grouping so the reduction vectorizes
      // yet stays bit-reproducible
      double s0 = 0.0, s1 = 0.0;
      int j = 0;
      for (; j + 1 < nout; j += 2) {
        s0 += wrow[j] * d_out[j];
        s1 += wrow[j + 1] * d_out[j + 1];
      }
      if (j < nout) s0 += wrow[j] * d_out[j];
      d_in[k] = s0 + s1;
    }
    if (l > 0) {
      // a_in is the ReLU output of the previous layer; zero activation means
      // the subgradient is taken as 0
      for (int k = 0; k < nin; ++k)
        if (!(a_in[k] > 0.0)) d_in[k] = 0.0;
    }
    std::swap(cur, next);
    param_end = param_begin;
    act_end = act_begin;
  }
}

}  // namespace detail

namespace {

std::size_t row_scratch_size(const MlpArchitecture& arch) {
  return arch.activation_count() + 2 * static_cast<std::size_t>(arch.max_width());
}

void forward_block(const MlpArchitecture& arch, const double* params, const Matrix& x,
                   std::size_t r0, std::size_t r1, Matrix& out, double* acts) {
  const auto m = static_cast<std::size_t>(arch.output_dim());
  const std::size_t last = arch.activation_count() - m;
  for (std::size_t i = r0; i < r1; ++i) {
    detail::forward_row(arch, params, x.row(i), acts);
    double* dst = out.row(i);
    for (std::size_t j = 0; j < m; ++j) dst[j] = acts[last + j];
  }
}

void backprop_block(const MlpArchitecture& arch, const double* params, const Matrix& x,
                    const Matrix& gout, std::size_t r0, std::size_t r1, double* gblock,
                    double* acts, double* delta) {
  for (std::size_t i = r0; i < r1; ++i) {
    detail::forward_row(arch, params, x.row(i), acts);
    detail::backward_row(arch, params, x.row(i), acts, gout.row(i), gblock, delta);
  }
}

thread_local std::vector<double> tl_row_scratch;

}  // namespace

Matrix forward(const MlpArchitecture& arch, const ParamVector& params,
               const Matrix& inputs) {
  arch.validate();
  if (inputs.cols != static_cast<std::size_t>(arch.input_dim()))
    throw Error(ErrorKind::Run, "forward: input width does not match architecture");
  if (params.size() != arch.param_count())
    throw Error(ErrorKind::Run, "forward: parameter count mismatch");

  Matrix out(inputs.rows, static_cast<std::size_t>(arch.output_dim()));
  const std::size_t nb = num_row_blocks(inputs.rows);
  const std::size_t scratch = row_scratch_size(arch);
  const bool par = nb > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t b = 0; b < nb; ++b) {
    tl_row_scratch.resize(scratch);
    const std::size_t r0 = b * kRowBlock;
    const std::size_t r1 = std::min(r0 + kRowBlock, inputs.rows);
    forward_block(arch, params.data(), inputs, r0, r1, out, tl_row_scratch.data());
  }
  return out;
}

ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads, NnWorkspace& ws) {
  arch.validate();
  const std::size_t d = arch.param_count();
  if (inputs.cols != static_cast<std::size_t>(arch.input_dim()) ||
      output_grads.cols != static_cast<std::size_t>(arch.output_dim()) ||
      output_grads.rows != inputs.rows)
    throw Error(ErrorKind::Run, "backprop: shape mismatch");
  if (params.size() != d) throw Error(ErrorKind::Run, "backprop: parameter count mismatch");

  const std::size_t nb = num_row_blocks(inputs.rows);
  const std::size_t acts_n = arch.activation_count();
  const std::size_t scratch = row_scratch_size(arch);
  ws.block_grads.assign(nb * d, 0.0);

  const bool par = nb > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (par) num_threads(max_workers())
  for (std::size_t b = 0; b < nb; ++b) {
    tl_row_scratch.resize(scratch);
    const std::size_t r0 = b * kRowBlock;
    const std::size_t r1 = std::min(r0 + kRowBlock, inputs.rows);
    backprop_block(arch, params.data(), inputs, output_grads, r0, r1,
                   ws.block_grads.data() + b * d, tl_row_scratch.data(),
                   tl_row_scratch.data() + acts_n);
  }

  // blocks are summed in index order: the result is thread-count independent
  ParamVector grad(d, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    const double* gb = ws.block_grads.data() + b * d;
    for (std::size_t j = 0; j < d; ++j) grad[j] += gb[j];
  }
  return grad;
}

ParamVector backprop(const MlpArchitecture& arch, const ParamVector& params,
                     const Matrix& inputs, const Matrix& output_grads) {
  NnWorkspace ws;
  return backprop(arch, params, inputs, output_grads, ws);
}

}  // namespace mile
