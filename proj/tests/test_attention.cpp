#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "wavesr/attention.hpp"

using namespace wavesr;
using wavesr::testing::check_gradients;

namespace {

// O(N^2 * L) double-loop evaluation of the attention equations, independent of
// the tensor-op implementation path.
std::vector<double> brute_force_self_attention(const std::vector<double>& x, int c, int n,
                                               const SelfAttentionParams<double>& p) {
  int l = p.w_f.shape()[0];
  auto matvec = [&](const Tensor<double>& w, int rows, int cols, int loc_index,
                    const std::vector<double>& src) {
    std::vector<double> out(rows, 0.0);
    for (int r = 0; r < rows; ++r)
      for (int cc = 0; cc < cols; ++cc) out[r] += w.values()[r * cols + cc] * src[cc * n + loc_index];
    return out;
  };
  // per-location projections
  std::vector<std::vector<double>> f(n), g(n), h(n);
  for (int i = 0; i < n; ++i) {
    f[i] = matvec(p.w_f, l, c, i, x);
    g[i] = matvec(p.w_g, l, c, i, x);
    h[i] = matvec(p.w_h, l, c, i, x);
  }
  std::vector<double> y(static_cast<std::size_t>(c) * n, 0.0);
  double alpha = p.alpha.values()[0];
  for (int j = 0; j < n; ++j) {
    // beta_{i,j} = softmax_i(f_i . g_j)
    std::vector<double> s(n);
    double mx = -1e300;
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int q = 0; q < l; ++q) dot += f[i][q] * g[j][q];
      s[i] = dot;
      mx = std::max(mx, dot);
    }
    double z = 0;
    for (int i = 0; i < n; ++i) {
      s[i] = std::exp(s[i] - mx);
      z += s[i];
    }
    std::vector<double> mixed(l, 0.0);
    for (int i = 0; i < n; ++i) {
      double beta = s[i] / z;
      for (int q = 0; q < l; ++q) mixed[q] += beta * h[i][q];
    }
    for (int cc = 0; cc < c; ++cc) {
      double o = 0;
      for (int q = 0; q < l; ++q) o += p.w_v.values()[cc * l + q] * mixed[q];
      y[static_cast<std::size_t>(cc) * n + j] = alpha * o + x[static_cast<std::size_t>(cc) * n + j];
    }
  }
  return y;
}

}  // namespace

TEST_CASE("alpha = 0 makes self-attention the exact identity") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = SelfAttentionParams<float>::init(8, 2, rng);
    auto x = TensorF::randn(Shape{1, 8, 4, 4}, rng);
    auto y = self_attention_forward(x, p);
    CHECK(y.values() == x.values());  // bit-exact
  }
}

TEST_CASE("hand example: C=1, N=2, unit weights, alpha=1") {
  SelfAttentionParams<double> p;
  p.k = 1;
  p.w_f = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  p.w_g = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  p.w_h = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  p.w_v = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  p.alpha = TensorD::full(Shape{1}, 1.0);
  auto x = TensorD::from_values(Shape{1, 1, 1, 2}, {1.0, 2.0});
  auto y = self_attention_forward(x, p);
  CHECK(y.values()[0] == doctest::Approx(2.73106).epsilon(1e-5));
  CHECK(y.values()[1] == doctest::Approx(3.88079).epsilon(1e-5));

  auto oracle = brute_force_self_attention(x.values(), 1, 2, p);
  CHECK(oracle[0] == doctest::Approx(y.values()[0]).epsilon(1e-12));
  CHECK(oracle[1] == doctest::Approx(y.values()[1]).epsilon(1e-12));
}

TEST_CASE("guards: AttentionTooLarge and DivisibilityError") {
  Rng rng(6);
  auto p = SelfAttentionParams<float>::init(8, 8, rng);
  auto big = TensorF::zeros(Shape{1, 8, 70, 70});
  CHECK_THROWS_AS(self_attention_forward(big, p), AttentionTooLarge);

  auto bad = TensorF::zeros(Shape{1, 6, 4, 4});
  CHECK_THROWS_AS(self_attention_forward(bad, p), DivisibilityError);
  CHECK_THROWS_AS(SelfAttentionParams<float>::init(6, 4, rng), DivisibilityError);
}

TEST_CASE("self-attention matches the brute-force oracle on random inputs") {
  Rng rng(77);
  for (int trial = 0; trial < 8; ++trial) {
    int c = 8;
    int h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
    auto p = SelfAttentionParams<double>::init(c, 4, rng);
    p.alpha = TensorD::full(Shape{1}, rng.uniform(-1.0, 1.0));
    auto x = TensorD::randn(Shape{1, c, h, w}, rng);
    auto y = self_attention_forward(x, p);
    auto oracle = brute_force_self_attention(x.values(), c, h * w, p);
    for (std::size_t i = 0; i < oracle.size(); ++i)
      CHECK(y.values()[i] == doctest::Approx(oracle[i]).epsilon(1e-5));
  }
}

TEST_CASE("upsample attention: zero mask path halves the body") {
  Rng rng(8);
  auto p = UpsampleAttentionParams<float>::init(4, 1, 1, rng);
  p.mask_w = TensorF::zeros(p.mask_w.shape());
  p.mask_b = TensorF::zeros(p.mask_b.shape());
  auto x = TensorF::randn(Shape{1, 4, 6, 6}, rng);
  auto gated = upsample_attention_forward(x, p);
  auto open = upsample_attention_forward(x, p, 0.2f, /*gated=*/false);
  REQUIRE(gated.shape() == open.shape());
  for (std::size_t i = 0; i < gated.numel(); ++i)
    CHECK(gated.values()[i] == doctest::Approx(0.5f * open.values()[i]).epsilon(1e-6));
}

TEST_CASE("upsample attention hand example: [[2]] -> [[1,1],[1,1]]") {
  UpsampleAttentionParams<double> p;
  p.factor_num = 2;
  p.factor_den = 1;
  // identity 3x3 body kernel
  std::vector<double> ident(9, 0.0);
  ident[4] = 1.0;
  p.body_w = TensorD::from_values(Shape{1, 1, 3, 3}, ident);
  p.body_b = TensorD::zeros(Shape{1});
  p.mask_w = TensorD::zeros(Shape{1, 1, 1, 1});
  p.mask_b = TensorD::zeros(Shape{1});
  auto x = TensorD::from_values(Shape{1, 1, 1, 1}, {2.0});
  auto y = upsample_attention_forward(x, p);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("upsample attention factor 1 keeps the shape") {
  Rng rng(9);
  auto p = UpsampleAttentionParams<float>::init(4, 1, 1, rng);
  auto x = TensorF::randn(Shape{2, 4, 5, 5}, rng);
  auto y = upsample_attention_forward(x, p);
  CHECK(y.shape() == x.shape());
}

TEST_CASE("mask values stay strictly inside (0,1); output bounded by body") {
  Rng rng(10);
  auto p = UpsampleAttentionParams<float>::init(4, 2, 1, rng);
  auto x = TensorF::randn(Shape{1, 4, 4, 4}, rng);
  auto gated = upsample_attention_forward(x, p);
  auto open = upsample_attention_forward(x, p, 0.2f, false);
  float maxb = 0;
  for (float v : open.values()) maxb = std::max(maxb, std::abs(v));
  for (std::size_t i = 0; i < gated.numel(); ++i) {
    CHECK(std::abs(gated.values()[i]) <= maxb + 1e-6f);
    if (open.values()[i] != 0.0f) {
      float ratio = gated.values()[i] / open.values()[i];
      CHECK(ratio > 0.0f);
      CHECK(ratio < 1.0f);
    }
  }
}

TEST_CASE("NonIntegralOutput from a fractional upsample factor") {
  Rng rng(11);
  auto p = UpsampleAttentionParams<float>::init(4, 3, 2, rng);
  auto x = TensorF::randn(Shape{1, 4, 5, 5}, rng);  // 5*3/2 is not integral
  CHECK_THROWS_AS(upsample_attention_forward(x, p), NonIntegralOutput);
}

TEST_CASE("gradients of both attention blocks pass finite differences") {
  Rng rng(12);
  auto sa = SelfAttentionParams<double>::init(4, 2, rng);
  sa.alpha = TensorD::full(Shape{1}, 0.7).set_requires_grad(true);
  sa.w_f.set_requires_grad(true);
  sa.w_g.set_requires_grad(true);
  sa.w_h.set_requires_grad(true);
  sa.w_v.set_requires_grad(true);
  auto x = TensorD::randn(Shape{1, 4, 3, 3}, rng);
  auto f_sa = [&]() { return ops::mean_all(ops::square(self_attention_forward(x, sa))); };
  auto res = check_gradients(f_sa, {sa.w_f, sa.w_g, sa.w_h, sa.w_v, sa.alpha});
  INFO(res.detail);
  CHECK(res.ok);

  auto up = UpsampleAttentionParams<double>::init(3, 2, 1, rng);
  up.body_w.set_requires_grad(true);
  up.body_b.set_requires_grad(true);
  up.mask_w.set_requires_grad(true);
  up.mask_b.set_requires_grad(true);
  auto x2 = TensorD::randn(Shape{1, 3, 4, 4}, rng);
  auto f_up = [&]() { return ops::mean_all(ops::square(upsample_attention_forward(x2, up))); };
  auto res2 = check_gradients(f_up, {up.body_w, up.body_b, up.mask_w, up.mask_b});
  INFO(res2.detail);
  CHECK(res2.ok);
}
