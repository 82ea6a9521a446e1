#include <doctest.h>

#include "wavesr/data.hpp"
#include "wavesr/pipeline.hpp"

using namespace wavesr;

TEST_CASE("shape contract: output is exactly scale times the LR input") {
  Rng rng(51);
  for (PipelineMode mode : {PipelineMode::PreInterpolated, PipelineMode::Progressive}) {
    for (int scale : {2, 4}) {
      GeneratorConfig cfg;
      cfg.base_width = 8;
      cfg.rho = 1;
      cfg.mode = mode;
      cfg.scale = scale;
      Generator<float> gen(cfg, 77);
      Image lr = Image::make(12, 10);
      for (auto& p : lr.pixels) p = static_cast<float>(rng.uniform());
      Image sr = super_resolve(lr, gen);
      CHECK(sr.height == 12 * scale);
      CHECK(sr.width == 10 * scale);
    }
  }
}

TEST_CASE("fresh pre-interpolated generator reproduces plain bicubic upscaling") {
  Rng rng(52);
  GeneratorConfig cfg;
  cfg.base_width = 8;
  cfg.rho = 1;
  cfg.scale = 2;
  Generator<float> gen(cfg, 78);
  Image lr = Image::make(8, 8);
  for (auto& p : lr.pixels) p = static_cast<float>(rng.uniform(0.1, 0.9));
  Image sr = super_resolve(lr, gen);
  Image bicubic = resize_image(lr, 16, 16, ResizeMode::Bicubic);
  for (auto& p : bicubic.pixels) p = std::clamp(p, 0.0f, 1.0f);
  REQUIRE(sr.pixels.size() == bicubic.pixels.size());
  for (std::size_t i = 0; i < sr.pixels.size(); ++i)
    CHECK(sr.pixels[i] == doctest::Approx(bicubic.pixels[i]).epsilon(1e-6));
}
