#pragma once

// Network assemblies: the subband-residual generator, the WGAN critic, and the
// perceptual encoder/decoder pair.
//
// The reference generator is: 3x3 head conv -> rho residual blocks
// (conv-LReLU-conv, self-attention, skip) -> upsample-attention block
// (factor s in progressive mode, 1 in pre-interpolated mode) -> 3x3 tail conv
// to 4 channels, added onto the (resampled) input subbands. The tail starts at
// zero, so a fresh generator is the identity on its subband input.
//
// attention=false builds the plain-CNN rows of the experiment table: residual
// blocks without self-attention and an ungated upsample stage.

#include <array>
#include <chrono>
#include <string>
#include <vector>

#include "wavesr/attention.hpp"
#include "wavesr/ops.hpp"
#include "wavesr/params.hpp"

namespace wavesr {

enum class PipelineMode { PreInterpolated, Progressive };

inline const char* to_string(PipelineMode m) {
  return m == PipelineMode::PreInterpolated ? "pre_interpolated" : "progressive";
}

inline PipelineMode pipeline_mode_from(const std::string& s) {
  if (s == "pre_interpolated") return PipelineMode::PreInterpolated;
  if (s == "progressive") return PipelineMode::Progressive;
  throw ConfigError("unknown pipeline mode '" + s + "'");
}

struct GeneratorConfig {
  int base_width = 64;
  int rho = 4;  // number of residual attention blocks
  int k = 8;    // attention reduction
  PipelineMode mode = PipelineMode::PreInterpolated;
  int scale = 2;
  bool attention = true;

  bool operator==(const GeneratorConfig&) const = default;
};

inline double conv_flops(double co, double ci, double kh, double kw, double ho, double wo) {
  return 2.0 * co * ci * kh * kw * ho * wo;  // one MAC = 2 flops
}

template <typename T>
class Generator {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.rho < 1) throw ConfigError("rho must be >= 1");
    if (cfg.scale != 2 && cfg.scale != 4) throw ConfigError("scale must be 2 or 4");
    Rng rng = Rng::derive(seed, "generator");
    int c = cfg.base_width;
    params_.add("head.w", init_conv_kernel<T>(c, 4, 3, 3, rng));
    params_.add("head.b", Tensor<T>::zeros(Shape{c}));
    for (int i = 0; i < cfg.rho; ++i) {
      std::string p = "block" + std::to_string(i);
      params_.add(p + ".c1.w", init_conv_kernel<T>(c, c, 3, 3, rng));
      params_.add(p + ".c1.b", Tensor<T>::zeros(Shape{c}));
      params_.add(p + ".c2.w", init_conv_kernel<T>(c, c, 3, 3, rng));
      params_.add(p + ".c2.b", Tensor<T>::zeros(Shape{c}));
      if (cfg.attention) {
        auto ap = SelfAttentionParams<T>::init(c, cfg.k, rng);
        ap.register_into(params_, p + ".attn");
        attn_.push_back(ap);
      }
    }
    int fnum = cfg.mode == PipelineMode::Progressive ? cfg.scale : 1;
    up_ = UpsampleAttentionParams<T>::init(c, fnum, 1, rng);
    // the plain-CNN variant has no mask path, so it owns no mask parameters
    up_.register_into(params_, "up", /*with_mask=*/cfg.attention);
    // zero tail: a fresh generator passes its input through untouched
    params_.add("tail.w", Tensor<T>::zeros(Shape{4, c, 3, 3}));
    params_.add("tail.b", Tensor<T>::zeros(Shape{4}));
  }

  // (N,4,h,w) subband stack -> (N,4,h*f,w*f)
  Tensor<T> forward(const Tensor<T>& subbands) const {
    Shape s = subbands.shape();
    if (s.rank != 4 || s[1] != 4)
      throw ShapeMismatch("generator expects (N,4,h,w) subbands, got " + s.str());
    auto h = conv2d(subbands, params_.at("head.w"), params_.at("head.b"), 1, Padding::Same);
    for (int i = 0; i < cfg_.rho; ++i) {
      std::string p = "block" + std::to_string(i);
      auto t = conv2d(h, params_.at(p + ".c1.w"), params_.at(p + ".c1.b"), 1, Padding::Same);
      t = activate(t, Activation::LeakyRelu, T(0.2));
      t = conv2d(t, params_.at(p + ".c2.w"), params_.at(p + ".c2.b"), 1, Padding::Same);
      if (cfg_.attention) t = self_attention_forward(t, attn_[i]);
      h = ops::add(h, t);
    }
    auto u = upsample_attention_forward(h, up_, T(0.2), cfg_.attention);
    auto residual = conv2d(u, params_.at("tail.w"), params_.at("tail.b"), 1, Padding::Same);
    Tensor<T> base = subbands;
    if (cfg_.mode == PipelineMode::Progressive && cfg_.scale > 1)
      base = interpolate(subbands, cfg_.scale, 1, ResizeMode::Bicubic);
    return ops::add(base, residual);
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  const GeneratorConfig& config() const { return cfg_; }

  std::size_t param_count() const { return params_.scalar_count(); }

  // MACs of conv/affine/attention at a given subband grid; resampling and
  // elementwise work is not counted
  double flops_estimate(int h, int w) const {
    int c = cfg_.base_width;
    double fl = conv_flops(c, 4, 3, 3, h, w) + c;  // head (+bias adds)
    double n = static_cast<double>(h) * w;
    int l = c / cfg_.k;
    for (int i = 0; i < cfg_.rho; ++i) {
      fl += 2 * conv_flops(c, c, 3, 3, h, w);
      if (cfg_.attention) {
        fl += 3 * conv_flops(l, c, 1, 1, h, w);  // f,g,h projections
        fl += 2.0 * n * n * l;                   // S = f^T g
        fl += 2.0 * n * n * l;                   // beta-weighted mix
        fl += conv_flops(c, l, 1, 1, h, w);      // v projection
      }
    }
    int f = cfg_.mode == PipelineMode::Progressive ? cfg_.scale : 1;
    double uh = static_cast<double>(h) * f, uw = static_cast<double>(w) * f;
    fl += conv_flops(c, c, 3, 3, uh, uw);
    if (cfg_.attention) fl += conv_flops(1, c, 1, 1, uh, uw);
    fl += conv_flops(4, c, 3, 3, uh, uw);  // tail
    return fl;
  }

  Tensor<T> make_dummy_input(int h, int w) const { return Tensor<T>::zeros(Shape{1, 4, h, w}); }

 private:
  GeneratorConfig cfg_;
  ParamSet<T> params_;
  std::vector<SelfAttentionParams<T>> attn_;
  UpsampleAttentionParams<T> up_;
};

struct CriticConfig {
  int base_width = 32;
  int n_stages = 4;
  int attention_stage = 2;  // one self-attention block after this stage
  int in_channels = 4;
  int k = 8;

  bool operator==(const CriticConfig&) const = default;
};

template <typename T>
class Critic {
 public:
  Critic(const CriticConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.n_stages < 1) throw ConfigError("critic needs at least one stage");
    Rng rng = Rng::derive(seed, "critic");
    int cin = cfg.in_channels;
    for (int i = 0; i < cfg.n_stages; ++i) {
      int cout = cfg.base_width << i;
      std::string p = "stage" + std::to_string(i);
      params_.add(p + ".w", init_conv_kernel<T>(cout, cin, 3, 3, rng));
      params_.add(p + ".b", Tensor<T>::zeros(Shape{cout}));
      if (i + 1 == cfg.attention_stage) {
        attn_ = SelfAttentionParams<T>::init(cout, cfg.k, rng);
        attn_.register_into(params_, p + ".attn");
      }
      cin = cout;
    }
    params_.add("fc.w", Tensor<T>::randn(Shape{cin, 1}, rng, std::sqrt(T(1) / cin)));
    params_.add("fc.b", Tensor<T>::zeros(Shape{1}));
  }

  // (N,C,H,W) -> (N) unbounded scores; no terminal squashing
  Tensor<T> forward(const Tensor<T>& x) const {
    Shape s = x.shape();
    if (s.rank != 4 || s[1] != cfg_.in_channels)
      throw ShapeMismatch("critic expects (N," + std::to_string(cfg_.in_channels) + ",H,W), got " +
                          s.str());
    int min_side = 1 << cfg_.n_stages;
    if (s[2] < min_side || s[3] < min_side)
      throw InputTooSmall("critic input " + s.str() + " needs spatial size >= " +
                          std::to_string(min_side));
    auto h = x;
    for (int i = 0; i < cfg_.n_stages; ++i) {
      std::string p = "stage" + std::to_string(i);
      h = conv2d(h, params_.at(p + ".w"), params_.at(p + ".b"), 2, Padding::Same);
      h = activate(h, Activation::LeakyRelu, T(0.2));
      if (i + 1 == cfg_.attention_stage) h = self_attention_forward(h, attn_);
    }
    auto pooled = ops::avg_hw(h);                                        // (N,Cf)
    auto score = ops::bias_add_rows(ops::matmul(pooled, params_.at("fc.w")), params_.at("fc.b"));
    return ops::reshape(score, Shape{s[0]});
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  const CriticConfig& config() const { return cfg_; }
  std::size_t param_count() const { return params_.scalar_count(); }

  double flops_estimate(int h, int w) const {
    double fl = 0;
    int cin = cfg_.in_channels;
    int ch = h, cw = w;
    for (int i = 0; i < cfg_.n_stages; ++i) {
      int cout = cfg_.base_width << i;
      ch = (ch + 1) / 2;
      cw = (cw + 1) / 2;
      fl += conv_flops(cout, cin, 3, 3, ch, cw);
      if (i + 1 == cfg_.attention_stage) {
        double n = static_cast<double>(ch) * cw;
        int l = cout / cfg_.k;
        fl += 3 * conv_flops(l, cout, 1, 1, ch, cw) + 4.0 * n * n * l +
              conv_flops(cout, l, 1, 1, ch, cw);
      }
      cin = cout;
    }
    fl += 2.0 * cin;  // final affine
    return fl;
  }

  Tensor<T> make_dummy_input(int h, int w) const {
    return Tensor<T>::zeros(Shape{1, cfg_.in_channels, h, w});
  }

 private:
  CriticConfig cfg_;
  ParamSet<T> params_;
  SelfAttentionParams<T> attn_;
};

// Six 3x3 stride-1 conv layers (32,32,64,64,128,128), ReLU after each, 2x2
// max-pool after layers 2 and 4. Features are the final layer's output.
template <typename T>
class PerceptualEncoder {
 public:
  static constexpr std::array<int, 6> kFilters{32, 32, 64, 64, 128, 128};

  explicit PerceptualEncoder(std::uint64_t seed) {
    Rng rng = Rng::derive(seed, "perceptual_encoder");
    int cin = 1;
    for (int i = 0; i < 6; ++i) {
      std::string p = "conv" + std::to_string(i);
      params_.add(p + ".w", init_conv_kernel<T>(kFilters[i], cin, 3, 3, rng));
      params_.add(p + ".b", Tensor<T>::zeros(Shape{kFilters[i]}));
      cin = kFilters[i];
    }
  }

  // (N,1,H,W) -> (N,128,H/4,W/4)
  Tensor<T> forward(const Tensor<T>& x) const {
    Shape s = x.shape();
    if (s.rank != 4 || s[1] != 1) throw ShapeMismatch("encoder expects (N,1,H,W), got " + s.str());
    if (s[2] < 4 || s[3] < 4)
      throw InputTooSmall("encoder input " + s.str() + " needs spatial size >= 4");
    auto h = x;
    for (int i = 0; i < 6; ++i) {
      std::string p = "conv" + std::to_string(i);
      h = activate(conv2d(h, params_.at(p + ".w"), params_.at(p + ".b"), 1, Padding::Same),
                   Activation::Relu);
      if (i == 1 || i == 3) h = max_pool2d(h);
    }
    return h;
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.scalar_count(); }

  double flops_estimate(int h, int w) const {
    double fl = 0;
    int cin = 1, ch = h, cw = w;
    for (int i = 0; i < 6; ++i) {
      fl += conv_flops(kFilters[i], cin, 3, 3, ch, cw);
      cin = kFilters[i];
      if (i == 1 || i == 3) {
        ch /= 2;
        cw /= 2;
      }
    }
    return fl;
  }

  Tensor<T> make_dummy_input(int h, int w) const { return Tensor<T>::zeros(Shape{1, 1, h, w}); }

 private:
  ParamSet<T> params_;
};

// Mirror decoder used only while pretraining the encoder as an autoencoder.
// The linear variant has no activations, which forces the encoder to keep
// pixel information in a linearly readable, well-conditioned form; that makes
// the downstream feature-space distance behave like a faithful image metric.
template <typename T>
class PerceptualDecoder {
 public:
  explicit PerceptualDecoder(std::uint64_t seed, bool linear = false) : linear_(linear) {
    Rng rng = Rng::derive(seed, "perceptual_decoder");
    auto add_conv = [&](const std::string& name, int co, int ci) {
      params_.add(name + ".w", init_conv_kernel<T>(co, ci, 3, 3, rng));
      params_.add(name + ".b", Tensor<T>::zeros(Shape{co}));
    };
    add_conv("d0", 128, 128);
    add_conv("d1", 64, 128);
    add_conv("d2", 64, 64);
    add_conv("d3", 32, 64);
    add_conv("d4", 32, 32);
    add_conv("d5", 1, 32);
  }

  // (N,128,h,w) -> (N,1,4h,4w)
  Tensor<T> forward(const Tensor<T>& x) const {
    auto block = [&](const Tensor<T>& t, const std::string& name) {
      auto y = conv2d(t, params_.at(name + ".w"), params_.at(name + ".b"), 1, Padding::Same);
      return linear_ ? y : activate(y, Activation::Relu);
    };
    auto h = block(x, "d0");
    h = interpolate(h, 2, 1, ResizeMode::Nearest);
    h = block(h, "d1");
    h = block(h, "d2");
    h = interpolate(h, 2, 1, ResizeMode::Nearest);
    h = block(h, "d3");
    h = block(h, "d4");
    return conv2d(h, params_.at("d5.w"), params_.at("d5.b"), 1, Padding::Same);
  }

  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  ParamSet<T> params_;
  bool linear_ = false;
};

struct ComplexityReport {
  std::size_t parameter_count = 0;
  std::size_t memory_bytes_f32 = 0;
  double flops_estimate = 0;
  double inference_seconds = 0;
};

template <typename Net>
ComplexityReport complexity_report(const Net& net, int h, int w, int runs = 5) {
  ComplexityReport rep;
  rep.parameter_count = net.param_count();
  rep.memory_bytes_f32 = rep.parameter_count * 4;
  rep.flops_estimate = net.flops_estimate(h, w);
  auto input = net.make_dummy_input(h, w);
  std::vector<double> times;
  for (int i = 0; i < runs; ++i) {
    NoGradGuard ng;
    auto t0 = std::chrono::steady_clock::now();
    auto out = net.forward(input);
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  rep.inference_seconds = times[times.size() / 2];
  return rep;
}

}  // namespace wavesr
