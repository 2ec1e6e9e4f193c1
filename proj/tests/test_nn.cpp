#include <doctest.h>

#include <cmath>

#include "mile/nn.hpp"
#include "mile/rng.hpp"
#include "support/testutil.hpp"

using namespace mile;

namespace {

MlpArchitecture arch_of(std::vector<int> widths) {
  MlpArchitecture a;
  a.layer_widths = std::move(widths);
  return a;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = scale * standard_normal(rng);
  return m;
}

}  // namespace

TEST_CASE("parameter counting and layer slices") {
  CHECK(arch_of({5, 16, 16, 2}).param_count() == 402);
  CHECK(arch_of({1, 1}).param_count() == 2);

  const auto arch = arch_of({3, 4, 2});
  const auto slices = layer_slices(arch);
  REQUIRE(slices.size() == 2);
  // disjoint, ordered, covering [0, d)
  std::size_t expect = 0;
  for (const auto& s : slices) {
    CHECK(s.weight_begin == expect);
    CHECK(s.weight_end == s.bias_begin);
    CHECK(s.bias_begin < s.bias_end);
    expect = s.bias_end;
  }
  CHECK(expect == arch.param_count());

  CHECK_THROWS_AS(arch_of({3}).validate(), Error);
  CHECK_THROWS_AS(arch_of({3, 0, 1}).validate(), Error);
}

TEST_CASE("init_params: zero biases, determinism, He bound") {
  const auto arch = arch_of({1, 1});
  const auto p = init_params(arch, 7);
  CHECK(p[1] == 0.0);  // bias exactly zero

  const auto arch2 = arch_of({5, 16, 16, 2});
  const auto a = init_params(arch2, 123);
  const auto b = init_params(arch2, 123);
  CHECK(a == b);
  const auto c = init_params(arch2, 124);
  CHECK(a != c);

  // He-uniform bound per layer
  const auto slices = layer_slices(arch2);
  for (const auto& s : slices) {
    const double bound = std::sqrt(6.0 / arch2.layer_widths[s.layer]);
    for (std::size_t i = s.weight_begin; i < s.weight_end; ++i) {
      CHECK(std::abs(a[i]) <= bound);
    }
    for (std::size_t i = s.bias_begin; i < s.bias_end; ++i) CHECK(a[i] == 0.0);
  }
}

TEST_CASE("forward: zero params, single affine layer, ReLU kink") {
  const auto arch = arch_of({2, 3, 1});
  ParamVector zeros(arch.param_count(), 0.0);
  Matrix x(4, 2);
  Rng rng(1);
  for (auto& v : x.data) v = standard_normal(rng);
  const Matrix y = forward(arch, zeros, x);
  for (double v : y.data) CHECK(v == 0.0);

  // single affine layer f(x) = w x + b
  const auto lin = arch_of({1, 1});
  ParamVector p{2.5, -0.75};
  Matrix xin(1, 1);
  xin(0, 0) = 3.0;
  CHECK(forward(lin, p, xin)(0, 0) == doctest::Approx(2.5 * 3.0 - 0.75));

  // [1,2,1] with hand-set weights: f(x) = relu(x) + relu(-x) + 0.5 = |x| + 0.5
  const auto kink = arch_of({1, 2, 1});
  ParamVector q{1.0, -1.0, 0.0, 0.0,  // W1, b1
                1.0, 1.0, 0.5};       // W2, b2
  Matrix xs(2, 1);
  xs(0, 0) = -1.0;
  xs(1, 0) = 1.0;
  const Matrix out = forward(kink, q, xs);
  CHECK(out(0, 0) == doctest::Approx(1.5));
  CHECK(out(1, 0) == doctest::Approx(1.5));
}

TEST_CASE("forward: dimension mismatch raises") {
  const auto arch = arch_of({3, 2});
  ParamVector p(arch.param_count(), 0.1);
  Matrix bad(2, 4);
  CHECK_THROWS_AS(forward(arch, p, bad), Error);
}

TEST_CASE("backprop: trivial cases") {
  const auto arch = arch_of({2, 4, 3});
  Rng rng(5);
  const auto p = init_params(arch, 5);
  const Matrix x = random_matrix(6, 2, rng);

  const Matrix zero_g(6, 3);
  const ParamVector g = backprop(arch, p, x, zero_g);
  for (double v : g) CHECK(v == 0.0);

  // d(wx+b)/dw = x, d/db = 1
  const auto lin = arch_of({1, 1});
  ParamVector lp{0.7, 0.1};
  Matrix xin(1, 1);
  xin(0, 0) = 3.0;
  Matrix gout(1, 1);
  gout(0, 0) = 1.0;
  const ParamVector lg = backprop(lin, lp, xin, gout);
  CHECK(lg[0] == doctest::Approx(3.0));
  CHECK(lg[1] == doctest::Approx(1.0));
}

TEST_CASE("backprop matches central differences of <f, g>") {
  Rng rng(42);
  for (int trial = 0; trial < 5; ++trial) {
    const auto arch = arch_of({3, 8, 5, 2});
    // fully random parameters: zero-initialized biases can park a ReLU
    // pre-activation exactly on the kink, where FD straddles the subgradient
    ParamVector theta(arch.param_count());
    for (auto& v : theta) v = 0.5 * standard_normal(rng);
    const Matrix x = random_matrix(7, 3, rng);
    const Matrix g = random_matrix(7, 2, rng);

    const ParamVector grad = backprop(arch, theta, x, g);
    const auto scalar = [&](const std::vector<double>& t) {
      const Matrix y = forward(arch, t, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * g.data[i];
      return s;
    };
    const auto fd = test::fd_gradient(scalar, theta, 1e-5);
    for (std::size_t i = 0; i < grad.size(); ++i)
      CHECK(test::rel_close(grad[i], fd[i], 1e-5, 1e-2));
    CHECK(test::rel_norm_error(fd, grad) < 1e-5);
  }
}

TEST_CASE("forward is pure and bit-deterministic") {
  const auto arch = arch_of({4, 16, 16, 2});
  const auto p = init_params(arch, 9);
  Rng rng(9);
  const Matrix x = random_matrix(130, 4, rng);
  const Matrix a = forward(arch, p, x);
  const Matrix b = forward(arch, p, x);
  CHECK(a.data == b.data);
}

TEST_CASE("parallel kernels match the serial reference") {
  Rng rng(11);
  const auto arch = arch_of({5, 16, 16, 2});
  const auto p = init_params(arch, 11);
  const Matrix x = random_matrix(333, 5, rng);
  const Matrix g = random_matrix(333, 2, rng);

  // forward accumulates in the same order in both implementations
  const Matrix y_par = forward(arch, p, x);
  const Matrix y_ref = ref::forward(arch, p, x);
  CHECK(y_par.data == y_ref.data);

  const ParamVector g_par = backprop(arch, p, x, g);
  const ParamVector g_ref = ref::backprop(arch, p, x, g);
  for (std::size_t i = 0; i < g_par.size(); ++i)
    CHECK(test::rel_close(g_par[i], g_ref[i], 1e-12, 1e-6));
}

TEST_CASE("backprop result is independent of the worker count") {
  Rng rng(13);
  const auto arch = arch_of({6, 16, 16, 2});
  const auto p = init_params(arch, 13);
  const Matrix x = random_matrix(400, 6, rng);
  const Matrix g = random_matrix(400, 2, rng);

  set_max_workers(1);
  const ParamVector g1 = backprop(arch, p, x, g);
  set_max_workers(2);
  const ParamVector g2 = backprop(arch, p, x, g);
  set_max_workers(0);
  CHECK(g1 == g2);
}
