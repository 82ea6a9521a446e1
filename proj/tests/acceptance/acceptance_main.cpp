// Acceptance suite: runs the ten checks end to end and prints one PASS/FAIL
// line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "wavesr/attention.hpp"
#include "wavesr/config.hpp"
#include "wavesr/data.hpp"
#include "wavesr/image_io.hpp"
#include "wavesr/losses.hpp"
#include "wavesr/metrics.hpp"
#include "wavesr/networks.hpp"
#include "wavesr/ops.hpp"
#include "wavesr/pipeline.hpp"
#include "wavesr/trainer.hpp"
#include "wavesr/wavelet.hpp"

using namespace wavesr;
namespace fs = std::filesystem;

namespace {

struct Ctx {
  fs::path work;
  std::string crit7_final_checkpoint;  // criterion 8 reuses criterion 7's run
  std::string crit7_encoder;
  double crit7_heldout_psnr = 0;
  double crit7_bicubic_psnr = 0;
};

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// criterion 1: wavelet perfect reconstruction
// ---------------------------------------------------------------------------
bool crit1(Ctx&, std::string& detail) {
  double t0 = now_s();
  Rng rng(1001);
  float worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int h = 2 * rng.uniform_int(1, 64);
    int w = 2 * rng.uniform_int(1, 64);
    Image im = Image::make(h, w);
    for (auto& p : im.pixels) p = static_cast<float>(rng.uniform());
    auto rec = idwt2_haar(dwt2_haar(im));
    for (std::size_t i = 0; i < im.pixels.size(); ++i)
      worst = std::max(worst, std::abs(rec.pixels[i] - im.pixels[i]));
  }
  Image ex = Image::make(2, 2);
  ex.pixels = {1, 2, 3, 4};
  auto sb = dwt2_haar(ex);
  bool example_ok = sb.ll[0] == 2.5f && sb.lh[0] == -0.5f && sb.hl[0] == -1.0f && sb.hh[0] == 0.0f;
  double dt = now_s() - t0;
  detail = "max error " + fmt(worst) + ", example " + (example_ok ? "exact" : "WRONG") + ", " +
           fmt(dt) + " s";
  return worst <= 1e-5f && example_ok && dt < 5.0;
}

// ---------------------------------------------------------------------------
// criterion 2: attention identity at alpha = 0
// ---------------------------------------------------------------------------
bool crit2(Ctx&, std::string& detail) {
  Rng rng(1002);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int c = 8 * rng.uniform_int(1, 2);
    int k = std::vector<int>{1, 2, 4, 8}[rng.uniform_int(0, 3)];
    auto p = SelfAttentionParams<float>::init(c, k, rng);
    int h = rng.uniform_int(2, 8), w = rng.uniform_int(2, 8);
    auto x = TensorF::randn(Shape{1, c, h, w}, rng);
    auto y = self_attention_forward(x, p);
    if (y.values() == x.values()) ++exact;
  }

  SelfAttentionParams<double> hp;
  hp.k = 1;
  hp.w_f = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  hp.w_g = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  hp.w_h = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  hp.w_v = TensorD::full(Shape{1, 1, 1, 1}, 1.0);
  hp.alpha = TensorD::full(Shape{1}, 1.0);
  auto y = self_attention_forward(TensorD::from_values(Shape{1, 1, 1, 2}, {1.0, 2.0}), hp);
  bool hand_ok = std::abs(y.values()[0] - 2.73106) <= 1e-5 &&
                 std::abs(y.values()[1] - 3.88079) <= 1e-5;
  detail = std::to_string(exact) + "/100 bit-exact, hand example " +
           (hand_ok ? "within 1e-5" : "WRONG");
  return exact == 100 && hand_ok;
}

// ---------------------------------------------------------------------------
// criterion 3: finite-difference checks for every differentiable op
// ---------------------------------------------------------------------------
struct FdCheck {
  std::string name;
  std::function<TensorD()> loss;
  std::vector<TensorD> params;
};

bool run_fd(const FdCheck& c, double& worst_rel, std::string& worst_name) {
  for (auto& p : c.params) const_cast<TensorD&>(p).clear_grad();
  auto loss = c.loss();
  loss.backward();
  bool ok = true;
  for (const auto& p : c.params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.grad().defined()) analytic = p.grad().values();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      auto& pm = const_cast<TensorD&>(p);
      double saved = pm.values_mut()[i];
      pm.values_mut()[i] = saved + 1e-5;
      double up = c.loss().item();
      pm.values_mut()[i] = saved - 1e-5;
      double dn = c.loss().item();
      pm.values_mut()[i] = saved;
      double fd = (up - dn) / 2e-5;
      double rel = std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 0.1});
      if (rel > worst_rel) {
        worst_rel = rel;
        worst_name = c.name;
      }
      if (rel > 1e-4) ok = false;
    }
  }
  return ok;
}

bool crit3(Ctx&, std::string& detail) {
  double t0 = now_s();
  Rng rng(1003);
  std::vector<FdCheck> checks;

  auto away_from_zero = [&](const Shape& s) {
    auto t = TensorD::randn(s, rng);
    auto v = t.values();
    for (auto& x : v) x += (x >= 0 ? 0.3 : -0.3);
    return TensorD::from_values(s, v);
  };

  {  // conv2d same/valid, stride 1 and 2, with bias
    auto x = TensorD::randn(Shape{2, 3, 6, 6}, rng).set_requires_grad(true);
    auto w = TensorD::randn(Shape{4, 3, 3, 3}, rng, 0.5).set_requires_grad(true);
    auto b = TensorD::randn(Shape{4}, rng).set_requires_grad(true);
    checks.push_back({"conv2d_same_s1",
                      [=] { return ops::mean_all(ops::square(conv2d(x, w, b, 1, Padding::Same))); },
                      {x, w, b}});
    checks.push_back({"conv2d_valid_s2",
                      [=] { return ops::mean_all(ops::square(conv2d(x, w, b, 2, Padding::Valid))); },
                      {x, w, b}});
  }
  {  // activations; inputs bounded away from the relu kink
    auto x = away_from_zero(Shape{2, 2, 4, 4}).set_requires_grad(true);
    checks.push_back({"relu", [=] { return ops::mean_all(ops::square(ops::relu(x))); }, {x}});
    checks.push_back(
        {"leaky_relu", [=] { return ops::mean_all(ops::square(ops::leaky_relu(x, 0.2))); }, {x}});
    checks.push_back({"sigmoid", [=] { return ops::mean_all(ops::square(ops::sigmoid(x))); }, {x}});
  }
  {  // pooling: distinct entries keep the argmax stable under the FD step
    std::vector<double> v(2 * 4 * 4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 7) + 0.13 * (i % 3);
    auto x = TensorD::from_values(Shape{1, 2, 4, 4}, v).set_requires_grad(true);
    checks.push_back(
        {"max_pool2d", [=] { return ops::mean_all(ops::square(max_pool2d(x))); }, {x}});
  }
  {  // interpolation up and down, both kernels
    auto x = TensorD::randn(Shape{1, 2, 4, 4}, rng).set_requires_grad(true);
    checks.push_back(
        {"interp_nearest_up",
         [=] { return ops::mean_all(ops::square(interpolate(x, 2, 1, ResizeMode::Nearest))); },
         {x}});
    checks.push_back(
        {"interp_bicubic_up",
         [=] { return ops::mean_all(ops::square(interpolate(x, 2, 1, ResizeMode::Bicubic))); },
         {x}});
    checks.push_back(
        {"interp_bicubic_down",
         [=] { return ops::mean_all(ops::square(interpolate(x, 1, 2, ResizeMode::Bicubic))); },
         {x}});
  }
  {  // softmax and matmul
    auto x = TensorD::randn(Shape{5}, rng).set_requires_grad(true);
    checks.push_back({"softmax_over",
                      [=] {
                        auto y = softmax_over(x);
                        return ops::sum_all(ops::mul(y, y));
                      },
                      {x}});
    auto a = TensorD::randn(Shape{2, 3, 4}, rng).set_requires_grad(true);
    auto b = TensorD::randn(Shape{2, 4, 5}, rng).set_requires_grad(true);
    checks.push_back({"matmul_batched",
                      [=] { return ops::mean_all(ops::square(ops::matmul(a, b))); },
                      {a, b}});
    checks.push_back(
        {"transpose_last2",
         [=] { return ops::mean_all(ops::square(ops::transpose_last2(a))); },
         {a}});
  }
  {  // elementwise algebra
    auto a = away_from_zero(Shape{6}).set_requires_grad(true);
    auto b = away_from_zero(Shape{6}).set_requires_grad(true);
    checks.push_back({"add_sub_mul",
                      [=] {
                        return ops::mean_all(
                            ops::square(ops::sub(ops::mul(a, b), ops::add(a, b))));
                      },
                      {a, b}});
    checks.push_back({"div", [=] { return ops::mean_all(ops::square(ops::div(a, b))); }, {a, b}});
    auto pos = TensorD::from_values(Shape{4}, {0.5, 1.5, 2.5, 0.9}).set_requires_grad(true);
    checks.push_back(
        {"sqrt_square",
         [=] { return ops::sum_all(ops::sqrt_t(ops::square(ops::add_scalar(pos, 1.0)))); },
         {pos}});
    auto s = TensorD::scalar(0.7).set_requires_grad(true);
    checks.push_back({"mul_by_scalar_tensor",
                      [=] { return ops::mean_all(ops::square(ops::mul_by_scalar_tensor(a, s))); },
                      {a, s}});
  }
  {  // reductions, broadcasts, bias paths
    auto x = TensorD::randn(Shape{2, 3, 4, 4}, rng).set_requires_grad(true);
    auto bias = TensorD::randn(Shape{3}, rng).set_requires_grad(true);
    checks.push_back({"sum_chw",
                      [=] { return ops::mean_all(ops::square(ops::sum_chw(x))); },
                      {x}});
    checks.push_back({"avg_hw",
                      [=] { return ops::mean_all(ops::square(ops::avg_hw(x))); },
                      {x}});
    checks.push_back({"bias_add",
                      [=] { return ops::mean_all(ops::square(ops::bias_add(x, bias))); },
                      {x, bias}});
    checks.push_back({"pad_crop",
                      [=] {
                        return ops::mean_all(
                            ops::square(ops::crop2d(ops::pad2d(x, 1, 2, 1, 0), 0, 1, 1, 1)));
                      },
                      {x}});
    checks.push_back({"slice_concat",
                      [=] {
                        auto parts = std::vector<Tensor<double>>{ops::slice_ch(x, 0, 1),
                                                                 ops::slice_ch(x, 1, 2)};
                        return ops::mean_all(ops::square(ops::concat_ch(parts)));
                      },
                      {x}});
    auto mask = TensorD::randn(Shape{2, 1, 4, 4}, rng).set_requires_grad(true);
    checks.push_back({"mul_bcast_ch",
                      [=] { return ops::mean_all(ops::square(ops::mul_bcast_ch(x, mask))); },
                      {x, mask}});
    auto rows = TensorD::randn(Shape{3, 4}, rng).set_requires_grad(true);
    auto rb = TensorD::randn(Shape{4}, rng).set_requires_grad(true);
    checks.push_back({"bias_add_rows",
                      [=] { return ops::mean_all(ops::square(ops::bias_add_rows(rows, rb))); },
                      {rows, rb}});
  }
  {  // Haar transform ops
    auto img = TensorD::randn(Shape{1, 1, 6, 6}, rng).set_requires_grad(true);
    checks.push_back({"haar_dwt2",
                      [=] { return ops::mean_all(ops::square(ops::haar_dwt2_op(img))); },
                      {img}});
    auto sb = TensorD::randn(Shape{1, 4, 3, 3}, rng).set_requires_grad(true);
    checks.push_back({"haar_idwt2",
                      [=] { return ops::mean_all(ops::square(ops::haar_idwt2_op(sb))); },
                      {sb}});
  }
  {  // both attention blocks
    auto sa = SelfAttentionParams<double>::init(4, 2, rng);
    sa.alpha = TensorD::full(Shape{1}, 0.6).set_requires_grad(true);
    sa.w_f.set_requires_grad(true);
    sa.w_g.set_requires_grad(true);
    sa.w_h.set_requires_grad(true);
    sa.w_v.set_requires_grad(true);
    auto xin = TensorD::randn(Shape{1, 4, 3, 3}, rng);
    checks.push_back({"self_attention",
                      [=] { return ops::mean_all(ops::square(self_attention_forward(xin, sa))); },
                      {sa.w_f, sa.w_g, sa.w_h, sa.w_v, sa.alpha}});
    auto up = UpsampleAttentionParams<double>::init(3, 2, 1, rng);
    up.body_w.set_requires_grad(true);
    up.body_b.set_requires_grad(true);
    up.mask_w.set_requires_grad(true);
    up.mask_b.set_requires_grad(true);
    auto xu = TensorD::randn(Shape{1, 3, 4, 4}, rng);
    checks.push_back(
        {"upsample_attention",
         [=] { return ops::mean_all(ops::square(upsample_attention_forward(xu, up))); },
         {up.body_w, up.body_b, up.mask_w, up.mask_b}});
  }

  double worst_rel = 0;
  std::string worst_name = "-";
  bool all_ok = true;
  for (const auto& c : checks)
    if (!run_fd(c, worst_rel, worst_name)) all_ok = false;
  double dt = now_s() - t0;
  detail = std::to_string(checks.size()) + " op checks, worst rel " + fmt(worst_rel) + " (" +
           worst_name + "), " + fmt(dt) + " s";
  return all_ok && dt < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 4: gradient-penalty oracle
// ---------------------------------------------------------------------------
bool crit4(Ctx&, std::string& detail) {
  Rng rng(1004);
  auto linear3 = [](const TensorD& x) { return ops::mul_scalar(ops::sum_chw(x), 3.0); };
  auto real = TensorD::full(Shape{4, 1, 1, 1}, 0.3);
  auto fake = TensorD::full(Shape{4, 1, 1, 1}, 0.8);
  auto p1 = critic_loss_with<double>(linear3, real, fake, 10.0, rng);
  double pen1 = p1.penalty * 10.0;

  auto zero = [](const TensorD& x) { return ops::mul_scalar(ops::sum_chw(x), 0.0); };
  auto p2 = critic_loss_with<double>(zero, real, fake, 10.0, rng);
  double total2 = p2.loss.item();

  detail = "linear critic term " + fmt(pen1) + " (want 40), zero critic loss " + fmt(total2) +
           " (want 10)";
  return std::abs(pen1 - 40.0) <= 1e-6 && std::abs(total2 - 10.0) <= 1e-6;
}

// ---------------------------------------------------------------------------
// criterion 5: metric oracles
// ---------------------------------------------------------------------------
bool crit5(Ctx&, std::string& detail) {
  Image a = Image::make(4, 4, RangeTag::Byte, 10.f);
  Image b = Image::make(4, 4, RangeTag::Byte, 11.f);
  double p = psnr(a, b);
  bool psnr_ok = std::abs(p - 48.1308) <= 1e-3;

  Image z = Image::make(8, 8, RangeTag::Byte, 0.f);
  Image f = Image::make(8, 8, RangeTag::Byte, 255.f);
  SsimConfig g;
  g.mode = SsimConfig::Mode::Global;
  double s0 = ssim(z, f, g);
  bool ssim_const_ok = std::abs(s0 - 9.9998e-5) <= 1e-8;

  Rng rng(1005);
  bool self_ok = true, sym_ok = true;
  for (int t = 0; t < 100; ++t) {
    Image x = Image::make(12, 12, RangeTag::Byte);
    Image y = Image::make(12, 12, RangeTag::Byte);
    for (auto& v : x.pixels) v = static_cast<float>(rng.uniform_int(0, 255));
    for (auto& v : y.pixels) v = static_cast<float>(rng.uniform_int(0, 255));
    if (ssim(x, x, g) != 1.0) self_ok = false;
    if (psnr(x, y) != psnr(y, x) || ssim(x, y, g) != ssim(y, x, g)) sym_ok = false;
  }
  detail = "psnr " + fmt(p) + ", constant-pair ssim " + fmt(s0) + ", self-ssim " +
           (self_ok ? "exact" : "WRONG") + ", symmetry " + (sym_ok ? "exact" : "WRONG");
  return psnr_ok && ssim_const_ok && self_ok && sym_ok;
}

// ---------------------------------------------------------------------------
// criterion 6: loss-variant matrix, 50 steps each
// ---------------------------------------------------------------------------
bool crit6(Ctx& ctx, std::string& detail) {
  auto corpus = ctx.work / "corpus8";
  make_synthetic_corpus(corpus.string(), 8, 32, 606);
  DatasetSpec ds;
  ds.root = corpus.string();
  ds.patch = 16;
  ds.patches_per_image = 4;
  ds.seed = 606;
  ds.scale = 2;
  auto data = build_dataset(ds);

  TrainConfig pre;
  pre.adam.lr = 1e-3;
  pre.batch = 4;
  pre.epochs = 100000;
  pre.max_generator_steps = 40;
  pre.seed = 606;
  pre.out_dir = (ctx.work / "enc8").string();
  auto enc_out = pretrain_perceptual(data, pre);
  auto enc = load_encoder(enc_out.final_checkpoint);
  for (auto& [n, t] : enc.params()) t.set_requires_grad(false);

  GeneratorConfig g;
  g.base_width = 16;
  g.rho = 2;
  g.k = 8;
  CriticConfig c;
  c.base_width = 8;
  c.n_stages = 2;
  c.attention_stage = 2;

  std::ostringstream report;
  bool all_ok = true;
  for (LossVariant v : {LossVariant::CnnVgg, LossVariant::Wgan, LossVariant::Perceptual,
                        LossVariant::WganVgg, LossVariant::WganMaP}) {
    TrainConfig tc;
    tc.adam.lr = 1e-4;
    tc.batch = 4;
    tc.epochs = 100000;
    tc.max_generator_steps = 50;
    tc.seed = 606;
    tc.loss.variant = v;
    tc.loss.critic_steps = 2;
    tc.loss.beta = 1.0;
    tc.out_dir = (ctx.work / ("variant_" + std::string(to_string(v)))).string();
    TrainDeps deps;
    if (variant_uses_perceptual(v)) deps.encoder = &enc;
    GeneratorConfig gv = g;
    gv.attention = variant_uses_attention_generator(v);
    try {
      auto out = train(data, tc, gv, c, deps);
      bool finite_w = true;
      for (const auto& l : out.logs)
        if (variant_uses_adversarial(v) && !std::isfinite(l.wasserstein)) finite_w = false;
      if (out.steps != 50 || !finite_w) {
        all_ok = false;
        report << to_string(v) << ":BAD ";
      } else {
        report << to_string(v) << ":ok ";
      }
    } catch (const std::exception& e) {
      all_ok = false;
      report << to_string(v) << ":threw(" << e.what() << ") ";
    }
  }
  detail = report.str();
  return all_ok;
}

// ---------------------------------------------------------------------------
// criterion 7: desk-scale end-to-end learning gate
// (hyperparameters pinned below; the thresholds come from the criterion)
// ---------------------------------------------------------------------------
struct Crit7Config {
  DatasetSpec dataset;
  GeneratorConfig gen;
  CriticConfig critic;
  TrainConfig train;
};

Crit7Config crit7_config(const fs::path& work, const std::string& run_name, long steps) {
  Crit7Config c;
  c.dataset.root = (work / "corpus32").string();
  c.dataset.patch = 32;
  c.dataset.patches_per_image = 4;
  c.dataset.seed = 707;
  c.dataset.scale = 2;

  c.gen.base_width = 32;
  c.gen.rho = 2;
  c.gen.k = 8;
  c.gen.scale = 2;

  c.critic.base_width = 16;
  c.critic.n_stages = 4;
  c.critic.attention_stage = 2;

  c.train.adam.lr = 1e-4;
  c.train.batch = 8;
  c.train.epochs = 1000000;
  c.train.seed = 707;
  c.train.loss.variant = LossVariant::WganMaP;
  c.train.loss.beta = 300.0;
  c.train.loss.lambda_gp = 10.0;
  c.train.loss.critic_steps = 5;
  c.train.lr_decay = 0.5;
  c.train.lr_decay_every_epochs = 6;
  c.train.max_generator_steps = steps;
  c.train.out_dir = (work / run_name).string();
  return c;
}

PerceptualEncoder<float> crit7_encoder(Ctx& ctx, const Dataset& data) {
  if (ctx.crit7_encoder.empty()) {
    TrainConfig pre;
    pre.adam.lr = 1e-3;
    pre.batch = 8;
    pre.epochs = 100000;
    pre.max_generator_steps = 300;
    pre.seed = 707;
    pre.out_dir = (ctx.work / "enc32").string();
    auto out = pretrain_perceptual(data, pre);
    ctx.crit7_encoder = out.final_checkpoint;
  }
  auto enc = load_encoder(ctx.crit7_encoder);
  for (auto& [n, t] : enc.params()) t.set_requires_grad(false);
  return enc;
}

bool crit7(Ctx& ctx, std::string& detail) {
  double t0 = now_s();
  auto cfg = crit7_config(ctx.work, "crit7", 500);
  make_synthetic_corpus(cfg.dataset.root, 32, 64, 707);
  auto data = build_dataset(cfg.dataset);
  auto enc = crit7_encoder(ctx, data);
  TrainDeps deps;
  deps.encoder = &enc;
  auto out = train(data, cfg.train, cfg.gen, cfg.critic, deps);
  ctx.crit7_final_checkpoint = out.final_checkpoint;

  // held-out evaluation: full pipeline vs the bicubic baseline
  const auto& v = out.validations.back();
  ctx.crit7_heldout_psnr = v.psnr_db;
  ctx.crit7_bicubic_psnr = v.bicubic_psnr_db;
  double dt = now_s() - t0;
  detail = "held-out psnr " + fmt(v.psnr_db) + " dB vs bicubic " + fmt(v.bicubic_psnr_db) +
           " dB (margin " + fmt(v.psnr_db - v.bicubic_psnr_db) + ", want >= 0.5), " + fmt(dt) +
           " s (cap 900)";
  return v.psnr_db - v.bicubic_psnr_db >= 0.5 && dt <= 900.0;
}

// ---------------------------------------------------------------------------
// criterion 8: determinism and resume
// ---------------------------------------------------------------------------
bool tensors_match(const fs::path& a, const fs::path& b, const std::string& prefix_filter,
                   std::string& why) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a))
    if (e.path().extension() == ".mbt" &&
        (prefix_filter.empty() ||
         e.path().filename().string().rfind(prefix_filter, 0) == 0))
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    why = "no tensors in " + a.string();
    return false;
  }
  for (const auto& n : names) {
    std::ifstream fa(a / n, std::ios::binary), fb(b / n, std::ios::binary);
    if (!fb) {
      why = n + " missing in " + b.string();
      return false;
    }
    std::string da((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string db((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    if (da != db) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

bool crit8(Ctx& ctx, std::string& detail) {
  if (ctx.crit7_final_checkpoint.empty()) {
    detail = "criterion 7 did not produce a checkpoint";
    return false;
  }
  auto cfg = crit7_config(ctx.work, "crit8_rerun", 500);
  auto data = build_dataset(cfg.dataset);
  auto enc = crit7_encoder(ctx, data);
  TrainDeps deps;
  deps.encoder = &enc;
  auto rerun = train(data, cfg.train, cfg.gen, cfg.critic, deps);

  std::string why;
  bool identical = tensors_match(ctx.crit7_final_checkpoint, rerun.final_checkpoint, "", why);

  auto half = crit7_config(ctx.work, "crit8_half", 250);
  auto first = train(data, half.train, half.gen, half.critic, deps);
  auto second_cfg = crit7_config(ctx.work, "crit8_half2", 250);
  auto resumed = train(data, second_cfg.train, second_cfg.gen, second_cfg.critic, deps,
                       first.final_checkpoint, /*reset_optimizer=*/false);
  std::string why2;
  bool resume_ok = tensors_match(ctx.crit7_final_checkpoint, resumed.final_checkpoint, "", why2);

  detail = std::string("rerun ") + (identical ? "bit-identical" : ("DIFFERS: " + why)) +
           "; 250+250 resume " + (resume_ok ? "bit-identical" : ("DIFFERS: " + why2));
  return identical && resume_ok;
}

// ---------------------------------------------------------------------------
// criterion 9: rho sweep harness
// ---------------------------------------------------------------------------
bool crit9(Ctx& ctx, std::string& detail) {
  double t0 = now_s();
  auto corpus = ctx.work / "corpus8";  // shares the criterion-6 corpus
  DatasetSpec ds;
  ds.root = corpus.string();
  ds.patch = 16;
  ds.patches_per_image = 4;
  ds.seed = 606;
  ds.scale = 2;
  auto data = build_dataset(ds);
  auto enc = load_encoder((ctx.work / "enc8" / "final").string());
  for (auto& [n, t] : enc.params()) t.set_requires_grad(false);

  GeneratorConfig g;
  g.base_width = 16;
  g.rho = 2;
  g.k = 8;
  CriticConfig c;
  c.base_width = 8;
  c.n_stages = 2;
  c.attention_stage = 2;
  TrainConfig tc;
  tc.adam.lr = 1e-4;
  tc.batch = 4;
  tc.epochs = 100000;
  tc.max_generator_steps = 50;
  tc.seed = 909;
  tc.loss.variant = LossVariant::WganMaP;
  tc.loss.critic_steps = 2;
  tc.loss.beta = 1.0;
  tc.out_dir = (ctx.work / "rho_sweep").string();

  auto specs = make_rho_sweep_specs(g, c, tc.loss, tc, {2, 4, 8});
  MatrixDeps deps;
  deps.domain_encoder = &enc;
  deps.natural_encoder = &enc;
  auto rows = run_experiment_matrix(specs, data, deps);

  std::ofstream rep(ctx.work / "rho_sweep_report.tsv");
  write_experiment_report(rep, rows, "");

  bool ok = rows.size() == 3;
  std::size_t prev = 0;
  for (const auto& r : rows) {
    if (!r.ok) ok = false;
    if (r.parameter_count <= prev) ok = false;
    prev = r.parameter_count;
  }
  double dt = now_s() - t0;
  detail = "3 rows, params";
  for (const auto& r : rows) detail += " " + std::to_string(r.parameter_count);
  detail += ", " + fmt(dt) + " s (cap 2700)";
  return ok && dt <= 2700.0;
}

// ---------------------------------------------------------------------------
// criterion 10: CLI round trip and exit codes
// ---------------------------------------------------------------------------
int run_cli(const std::string& args, const fs::path& dir) {
  std::string cmd = std::string(WAVESR_CLI_PATH) + " " + args + " >" + (dir / "out.txt").string() +
                    " 2>" + (dir / "err.txt").string();
  return WEXITSTATUS(std::system(cmd.c_str()));
}

bool crit10(Ctx& ctx, std::string& detail) {
  auto dir = ctx.work / "cli";
  fs::create_directories(dir);
  Rng rng(1010);
  int worst = 0;
  bool raw_exact = true;
  for (int i = 0; i < 100; ++i) {
    int h = 2 * rng.uniform_int(4, 16);
    int w = 2 * rng.uniform_int(4, 16);
    Image im = Image::make(h, w);
    for (auto& p : im.pixels) p = static_cast<float>(rng.uniform());
    auto in_path = dir / ("img" + std::to_string(i) + ".png");
    save_png8(in_path.string(), im);
    Image original = load_image(in_path.string());
    auto sb_dir = dir / ("sb" + std::to_string(i));
    bool raw = i < 10;
    if (run_cli("decompose " + in_path.string() + (raw ? " --raw" : "") + " --out " +
                    sb_dir.string(),
                dir) != 0)
      return false;
    auto rec_path = dir / ("rec" + std::to_string(i) + ".png");
    if (run_cli("reconstruct " + sb_dir.string() + " --out " + rec_path.string(), dir) != 0)
      return false;
    Image back = load_image(rec_path.string());
    for (std::size_t j = 0; j < im.pixels.size(); ++j) {
      int qa = static_cast<int>(std::lround(original.pixels[j] * 255.f));
      int qb = static_cast<int>(std::lround(back.pixels[j] * 255.f));
      worst = std::max(worst, std::abs(qa - qb));
      if (raw && qa != qb) raw_exact = false;
    }
    fs::remove_all(sb_dir);
    fs::remove(in_path);
    fs::remove(rec_path);
  }

  // exit codes: 0 exercised above; 1 config; 2 shape; 3 divergence
  std::ofstream bad(dir / "bad.cfg");
  bad << "[loss]\nbetta = 1\n";
  bad.close();
  int code1 = run_cli("--config " + (dir / "bad.cfg").string() + " train", dir);

  Image odd = Image::make(7, 8, RangeTag::Unit, 0.5f);
  save_png8((dir / "odd.png").string(), odd);
  int code2 = run_cli("decompose " + (dir / "odd.png").string() + " --out " +
                          (dir / "oddsb").string(),
                      dir);

  make_synthetic_corpus((dir / "divcorpus").string(), 4, 16, 3);
  std::ofstream dcfg(dir / "div.cfg");
  dcfg << "[dataset]\nroot = " << (dir / "divcorpus").string()
       << "\npatch = 16\npatches_per_image = 2\n"
       << "[model]\nbase_width = 8\nrho = 1\nscale = 2\ncritic_base_width = 8\ncritic_stages = "
          "2\n"
       << "[train]\nlr = 1e10\nbatch = 2\nepochs = 1000\nmax_steps = 10\nseed = 1\nout_dir = "
       << (dir / "divrun").string() << "\n[loss]\nvariant = WGAN\ncritic_steps = 2\n";
  dcfg.close();
  int code3 = run_cli("--config " + (dir / "div.cfg").string() + " train", dir);

  detail = "100 round trips, worst 8-bit error " + std::to_string(worst) +
           " (raw exact: " + (raw_exact ? "yes" : "NO") + "); exit codes 1/2/3 -> " +
           std::to_string(code1) + "/" + std::to_string(code2) + "/" + std::to_string(code3);
  return worst <= 1 && raw_exact && code1 == 1 && code2 == 2 && code3 == 3;
}

}  // namespace

int main(int argc, char** argv) {
  Ctx ctx;
  ctx.work = fs::temp_directory_path() / "wavesr_acceptance";
  if (argc > 1) ctx.work = argv[1];
  fs::remove_all(ctx.work);
  fs::create_directories(ctx.work);

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(Ctx&, std::string&)> run;
  };
  std::vector<Criterion> criteria = {
      {1, "wavelet perfect reconstruction", crit1},
      {2, "attention identity at alpha=0", crit2},
      {3, "gradient correctness (finite differences)", crit3},
      {4, "gradient-penalty oracle", crit4},
      {5, "metric oracles", crit5},
      {6, "loss-variant matrix", crit6},
      {7, "desk-scale end-to-end learning", crit7},
      {8, "determinism and resume", crit8},
      {9, "rho sweep harness", crit9},
      {10, "CLI round trip and exit codes", crit10},
  };

  int failures = 0;
  for (auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(ctx, detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%2d/10] %s  %s (%s)\n", c.id, ok ? "PASS" : "FAIL", c.name, detail.c_str());
    std::fflush(stdout);
  }
  if (failures == 0) {
    std::printf("acceptance: all 10 criteria passed\n");
  } else {
    std::printf("acceptance: %d criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
