#include <doctest.h>

#include "wavesr/networks.hpp"

using namespace wavesr;

TEST_CASE("generator shape contract in pre_interpolated mode") {
  GeneratorConfig cfg;
  cfg.base_width = 16;
  cfg.rho = 2;
  cfg.k = 8;
  Generator<float> g(cfg, 1);
  // 64x64 parent image -> 32x32 subbands in and out
  auto x = TensorF::zeros(Shape{1, 4, 32, 32});
  auto y = g.forward(x);
  CHECK(y.shape() == Shape{1, 4, 32, 32});
}

TEST_CASE("generator shape contract in progressive mode, s=2") {
  GeneratorConfig cfg;
  cfg.base_width = 16;
  cfg.rho = 1;
  cfg.mode = PipelineMode::Progressive;
  cfg.scale = 2;
  Generator<float> g(cfg, 2);
  auto x = TensorF::zeros(Shape{1, 4, 16, 16});
  auto y = g.forward(x);
  CHECK(y.shape() == Shape{1, 4, 32, 32});
}

TEST_CASE("fresh generator (zero tail) is the identity on subbands") {
  GeneratorConfig cfg;
  cfg.base_width = 16;
  cfg.rho = 2;
  Generator<float> g(cfg, 3);
  Rng rng(4);
  auto x = TensorF::randn(Shape{2, 4, 8, 8}, rng);
  auto y = g.forward(x);
  CHECK(y.values() == x.values());  // bit-exact global residual
}

TEST_CASE("generator rejects non-subband input") {
  Generator<float> g(GeneratorConfig{.base_width = 16, .rho = 1}, 5);
  CHECK_THROWS_AS(g.forward(TensorF::zeros(Shape{1, 3, 8, 8})), ShapeMismatch);
}

TEST_CASE("critic with zero final affine scores 0 and is otherwise sensitive") {
  CriticConfig cfg;
  cfg.base_width = 8;
  Critic<float> c(cfg, 7);
  Rng rng(8);
  auto x = TensorF::randn(Shape{2, 4, 16, 16}, rng);

  auto& fcw = c.params().at("fc.w");
  auto saved = fcw.values();
  std::fill(fcw.values_mut().begin(), fcw.values_mut().end(), 0.0f);
  auto z = c.forward(x);
  for (float v : z.values()) CHECK(v == 0.0f);
  fcw.values_mut() = saved;

  auto s1 = c.forward(x);
  for (float v : s1.values()) CHECK(std::isfinite(v));
  auto s2 = c.forward(ops::mul_scalar(x, 2.0f));
  CHECK(s1.values()[0] != s2.values()[0]);  // not input-scale invariant
}

TEST_CASE("critic rejects inputs smaller than its stage pyramid") {
  CriticConfig cfg;
  cfg.base_width = 8;
  cfg.n_stages = 4;
  Critic<float> c(cfg, 9);
  CHECK_THROWS_AS(c.forward(TensorF::zeros(Shape{1, 4, 8, 8})), InputTooSmall);
  CHECK_NOTHROW(c.forward(TensorF::zeros(Shape{1, 4, 16, 16})));
}

TEST_CASE("perceptual encoder: 56x56 -> 128x14x14, deterministic, guards") {
  PerceptualEncoder<float> e(11);
  auto x = TensorF::zeros(Shape{1, 1, 56, 56});
  auto f = e.forward(x);
  CHECK(f.shape() == Shape{1, 128, 14, 14});

  Rng rng(12);
  auto xr = TensorF::randn(Shape{1, 1, 8, 8}, rng);
  CHECK(e.forward(xr).values() == e.forward(xr).values());

  CHECK_THROWS_AS(e.forward(TensorF::zeros(Shape{1, 1, 2, 2})), InputTooSmall);
}

TEST_CASE("parameter counting: single 3x3 conv 1->1 with bias has 10 parameters") {
  ParamSet<float> ps;
  Rng rng(13);
  ps.add("w", init_conv_kernel<float>(1, 1, 3, 3, rng));
  ps.add("b", TensorF::zeros(Shape{1}));
  CHECK(ps.scalar_count() == 10);
}

TEST_CASE("flops formula: 1x1 conv C->L on HxW counts 2*C*L*H*W") {
  CHECK(conv_flops(6, 16, 1, 1, 10, 12) == doctest::Approx(2.0 * 16 * 6 * 10 * 12));
}

TEST_CASE("complexity report fields are positive and counts reproducible") {
  GeneratorConfig cfg;
  cfg.base_width = 16;
  cfg.rho = 2;
  Generator<float> g1(cfg, 42), g2(cfg, 43);  // different seeds, same architecture
  auto rep = complexity_report(g1, 8, 8, 3);
  CHECK(rep.parameter_count > 0);
  CHECK(rep.memory_bytes_f32 == rep.parameter_count * 4);
  CHECK(rep.flops_estimate > 0);
  CHECK(rep.inference_seconds > 0);
  CHECK(g1.param_count() == g2.param_count());
}

TEST_CASE("rho sweep has strictly increasing parameter counts") {
  std::size_t prev = 0;
  for (int rho : {2, 4, 8}) {
    GeneratorConfig cfg;
    cfg.base_width = 16;
    cfg.rho = rho;
    Generator<float> g(cfg, 1);
    CHECK(g.param_count() > prev);
    prev = g.param_count();
  }
}
