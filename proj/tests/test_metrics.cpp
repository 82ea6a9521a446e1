#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wavesr/data.hpp"
#include "wavesr/image_io.hpp"
#include "wavesr/metrics.hpp"

using namespace wavesr;
namespace fs = std::filesystem;

namespace {

Image byte_image(int h, int w, float fill) {
  Image im = Image::make(h, w, RangeTag::Byte, fill);
  return im;
}

Image random_byte_image(int h, int w, Rng& rng) {
  Image im = Image::make(h, w, RangeTag::Byte);
  for (auto& p : im.pixels) p = static_cast<float>(rng.uniform_int(0, 255));
  return im;
}

}  // namespace

TEST_CASE("psnr: identical images give +infinity") {
  Rng rng(1);
  auto a = random_byte_image(8, 8, rng);
  CHECK(std::isinf(psnr(a, a)));
}

TEST_CASE("psnr at MSE=1 is 20*log10(255)") {
  auto a = byte_image(4, 4, 10.f);
  auto b = byte_image(4, 4, 11.f);  // every pixel off by one -> MSE 1
  CHECK(psnr(a, b) == doctest::Approx(48.1308).epsilon(1e-5));
}

TEST_CASE("psnr peak error case is 0 dB") {
  auto a = byte_image(4, 4, 0.f);
  auto b = byte_image(4, 4, 255.f);
  CHECK(psnr(a, b) == doctest::Approx(0.0).scale(1));
}

TEST_CASE("psnr errors: shape and range-tag mismatches") {
  auto a = byte_image(4, 4, 0.f);
  auto b = byte_image(4, 6, 0.f);
  CHECK_THROWS_AS(psnr(a, b), ShapeMismatch);
  Image u = Image::make(4, 4, RangeTag::Unit, 0.f);
  CHECK_THROWS_AS(psnr(a, u), RangeTagMismatch);
}

TEST_CASE("ssim of an image with itself is exactly 1 in both modes") {
  Rng rng(2);
  auto a = random_byte_image(16, 16, rng);
  SsimConfig g;
  g.mode = SsimConfig::Mode::Global;
  CHECK(ssim(a, a, g) == 1.0);
  SsimConfig w;  // windowed default
  CHECK(ssim(a, a, w) == 1.0);
}

TEST_CASE("global ssim of 0-image vs 255-image matches the constant-image closed form") {
  auto a = byte_image(8, 8, 0.f);
  auto b = byte_image(8, 8, 255.f);
  SsimConfig cfg;
  cfg.mode = SsimConfig::Mode::Global;
  double got = ssim(a, b, cfg);
  // (2*0*255 + C1) / (0 + 255^2 + C1) with C1 = 6.5025
  double expected = 6.5025 / (255.0 * 255.0 + 6.5025);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(got - 9.9998e-5) <= 1e-8);
}

TEST_CASE("global ssim matches a direct statistics recomputation on random pairs") {
  Rng rng(3);
  SsimConfig cfg;
  cfg.mode = SsimConfig::Mode::Global;
  for (int t = 0; t < 5; ++t) {
    auto x = random_byte_image(8, 8, rng);
    auto y = random_byte_image(8, 8, rng);
    double mx = 0, my = 0;
    std::size_t n = x.pixels.size();
    for (std::size_t i = 0; i < n; ++i) {
      mx += x.pixels[i];
      my += y.pixels[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vx += (x.pixels[i] - mx) * (x.pixels[i] - mx);
      vy += (y.pixels[i] - my) * (y.pixels[i] - my);
      cov += (x.pixels[i] - mx) * (y.pixels[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    double c1 = 6.5025, c2 = 58.5225;
    double expect =
        ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    CHECK(ssim(x, y, cfg) == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("metric symmetry on random pairs") {
  Rng rng(4);
  SsimConfig cfg;
  cfg.mode = SsimConfig::Mode::Global;
  for (int t = 0; t < 20; ++t) {
    auto x = random_byte_image(12, 12, rng);
    auto y = random_byte_image(12, 12, rng);
    CHECK(psnr(x, y) == psnr(y, x));
    CHECK(ssim(x, y, cfg) == ssim(y, x, cfg));
  }
}

TEST_CASE("psnr strictly decreases as noise amplitude grows") {
  Rng rng(5);
  auto x = random_byte_image(16, 16, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {1.0, 4.0, 16.0}) {
    Image y = x;
    Rng noise(99);
    for (auto& p : y.pixels) {
      p += static_cast<float>(amp * (noise.uniform() > 0.5 ? 1 : -1));
      p = std::clamp(p, 0.f, 255.f);
    }
    double v = psnr(x, y);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("windowed ssim requires images at least as large as the window") {
  auto a = byte_image(8, 8, 1.f);
  SsimConfig cfg;  // windowed, 11x11
  CHECK_THROWS_AS(ssim(a, a, cfg), ImageSmallerThanWindow);
}

TEST_CASE("evaluate_folder: identical folders, means, and missing counterparts") {
  auto dir = fs::temp_directory_path() / "wavesr_eval_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "sr");
  fs::create_directories(dir / "hr");
  Rng rng(6);
  for (int i = 0; i < 2; ++i) {
    Image im = synth_shapes_image(16, rng);
    std::string name = "img" + std::to_string(i) + ".png";
    save_png8((dir / "sr" / name).string(), im);
    save_png8((dir / "hr" / name).string(), im);
  }
  SsimConfig cfg;
  cfg.mode = SsimConfig::Mode::Global;
  auto table = evaluate_folder((dir / "sr").string(), (dir / "hr").string(), cfg);
  REQUIRE(table.rows.size() == 2);
  for (const auto& r : table.rows) {
    CHECK(std::isinf(r.psnr_db));
    CHECK(r.ssim == 1.0);
  }
  CHECK(table.mean.ssim == 1.0);

  // mean equals the arithmetic mean of the rows on perturbed pairs
  save_png8((dir / "sr" / "img0.png").string(), synth_shapes_image(16, rng));
  save_png8((dir / "sr" / "img1.png").string(), synth_shapes_image(16, rng));
  auto t2 = evaluate_folder((dir / "sr").string(), (dir / "hr").string(), cfg);
  CHECK(t2.mean.psnr_db ==
        doctest::Approx((t2.rows[0].psnr_db + t2.rows[1].psnr_db) / 2).epsilon(1e-12));

  fs::remove((dir / "hr" / "img1.png"));
  CHECK_THROWS_AS(evaluate_folder((dir / "sr").string(), (dir / "hr").string(), cfg),
                  MissingCounterpart);
  fs::remove_all(dir);
}

TEST_CASE("tsv and jsonl report formats") {
  MetricTable t;
  t.cfg.mode = SsimConfig::Mode::Global;
  t.rows.push_back({"a.png", 30.0, 0.9});
  t.mean = {"mean", 30.0, 0.9};
  std::ostringstream tsv;
  write_metric_table_tsv(tsv, t);
  CHECK(tsv.str().find("# ssim_mode=global") == 0);
  CHECK(tsv.str().find("a.png\t30\t0.9") != std::string::npos);
  std::ostringstream jl;
  write_metric_table_jsonl(jl, t);
  CHECK(jl.str().find("{\"filename\":\"a.png\"") != std::string::npos);
}
