#pragma once

// The two attention blocks: self-attention over all spatial locations and the
// mask-gated upsample block.
//
// Softmax axis: beta[i][j] is normalized over the attending index i for each
// output location j, which makes every column of beta a probability vector.
// That reading is confined to this file; switching the axis is a one-line
// change in self_attention_forward.

#include "wavesr/ops.hpp"
#include "wavesr/params.hpp"

namespace wavesr {

// N = H*W is capped so the N x N affinity matrix stays desk-scale
inline constexpr int kAttentionMaxLocations = 4096;

template <typename T>
struct SelfAttentionParams {
  Tensor<T> w_f, w_g, w_h;  // 1x1 convs C -> L
  Tensor<T> w_v;            // 1x1 conv L -> C
  Tensor<T> alpha;          // scalar blend, starts at 0
  int k = 8;                // L = C / k

  static SelfAttentionParams init(int channels, int k, Rng& rng) {
    if (k != 1 && k != 2 && k != 4 && k != 8)
      throw DivisibilityError("attention reduction k must be one of {1,2,4,8}");
    if (channels % k != 0)
      throw DivisibilityError("channels " + std::to_string(channels) + " not divisible by k=" +
                              std::to_string(k));
    int l = channels / k;
    SelfAttentionParams p;
    p.k = k;
    p.w_f = init_conv_kernel<T>(l, channels, 1, 1, rng);
    p.w_g = init_conv_kernel<T>(l, channels, 1, 1, rng);
    p.w_h = init_conv_kernel<T>(l, channels, 1, 1, rng);
    p.w_v = init_conv_kernel<T>(channels, l, 1, 1, rng);
    p.alpha = Tensor<T>::zeros(Shape{1});
    return p;
  }

  void register_into(ParamSet<T>& ps, const std::string& prefix) {
    w_f = ps.add(prefix + ".wf", w_f);
    w_g = ps.add(prefix + ".wg", w_g);
    w_h = ps.add(prefix + ".wh", w_h);
    w_v = ps.add(prefix + ".wv", w_v);
    alpha = ps.add(prefix + ".alpha", alpha);
  }
};

// y_i = alpha * o_i + x_i with o = Wv (sum_i beta_{i,j} h(x_i))
template <typename T>
Tensor<T> self_attention_forward(const Tensor<T>& x, const SelfAttentionParams<T>& p) {
  Tensor<T> xin = x;
  bool squeeze = false;
  if (x.shape().rank == 3) {
    Shape s = x.shape();
    xin = ops::reshape(x, Shape{1, s[0], s[1], s[2]});
    squeeze = true;
  }
  Shape s = xin.shape();
  int n = s[0], c = s[1], h = s[2], w = s[3];
  int loc = h * w;
  if (loc > kAttentionMaxLocations)
    throw AttentionTooLarge(std::to_string(h) + "x" + std::to_string(w) + " gives N=" +
                            std::to_string(loc) + " > " + std::to_string(kAttentionMaxLocations));
  if (c % p.k != 0)
    throw DivisibilityError("channels " + std::to_string(c) + " not divisible by k=" +
                            std::to_string(p.k));
  int l = p.w_f.shape()[0];

  auto flat = [&](const Tensor<T>& t, int ch) {
    return ops::reshape(t, Shape{n, ch, loc});
  };
  auto f = flat(conv2d(xin, p.w_f, 1, Padding::Same), l);  // (N,L,loc)
  auto g = flat(conv2d(xin, p.w_g, 1, Padding::Same), l);
  auto hh = flat(conv2d(xin, p.w_h, 1, Padding::Same), l);

  // S[i][j] = f_i . g_j ; softmax over i per column j
  auto scores = ops::matmul(ops::transpose_last2(f), g);            // (N,loc_i,loc_j)
  auto beta_t = ops::softmax_lastdim(ops::transpose_last2(scores));  // rows j: beta_{., j}
  auto beta = ops::transpose_last2(beta_t);                          // (N,loc_i,loc_j)
  auto o = ops::matmul(hh, beta);                                    // (N,L,loc_j)
  auto o_map = ops::reshape(o, Shape{n, l, h, w});
  auto projected = conv2d(o_map, p.w_v, 1, Padding::Same);  // (N,C,H,W)
  auto y = ops::add(ops::mul_by_scalar_tensor(projected, p.alpha), xin);
  if (squeeze) return ops::reshape(y, Shape{c, h, w});
  return y;
}

template <typename T>
struct UpsampleAttentionParams {
  Tensor<T> body_w, body_b;  // 3x3 conv C -> C
  Tensor<T> mask_w, mask_b;  // 1x1 conv C -> 1
  int factor_num = 1;
  int factor_den = 1;

  static UpsampleAttentionParams init(int channels, int factor_num, int factor_den, Rng& rng) {
    UpsampleAttentionParams p;
    p.factor_num = factor_num;
    p.factor_den = factor_den;
    p.body_w = init_conv_kernel<T>(channels, channels, 3, 3, rng);
    p.body_b = Tensor<T>::zeros(Shape{channels});
    p.mask_w = init_conv_kernel<T>(1, channels, 1, 1, rng);
    p.mask_b = Tensor<T>::zeros(Shape{1});
    return p;
  }

  void register_into(ParamSet<T>& ps, const std::string& prefix, bool with_mask = true) {
    body_w = ps.add(prefix + ".body.w", body_w);
    body_b = ps.add(prefix + ".body.b", body_b);
    if (with_mask) {
      mask_w = ps.add(prefix + ".mask.w", mask_w);
      mask_b = ps.add(prefix + ".mask.b", mask_b);
    }
  }
};

// nearest-interpolate -> 3x3 conv + leaky ReLU -> sigmoid 1x1 mask -> product
template <typename T>
Tensor<T> upsample_attention_forward(const Tensor<T>& x, const UpsampleAttentionParams<T>& p,
                                     T slope = T(0.2), bool gated = true) {
  Tensor<T> xin = x;
  bool squeeze = false;
  if (x.shape().rank == 3) {
    Shape s = x.shape();
    xin = ops::reshape(x, Shape{1, s[0], s[1], s[2]});
    squeeze = true;
  }
  auto up = (p.factor_num == p.factor_den)
                ? xin
                : interpolate(xin, p.factor_num, p.factor_den, ResizeMode::Nearest);
  auto body = activate(conv2d(up, p.body_w, p.body_b, 1, Padding::Same), Activation::LeakyRelu,
                       slope);
  Tensor<T> out = body;
  if (gated) {
    auto mask = activate(conv2d(body, p.mask_w, p.mask_b, 1, Padding::Same), Activation::Sigmoid);
    out = ops::mul_bcast_ch(body, mask);
  }
  if (squeeze) {
    Shape so = out.shape();
    return ops::reshape(out, Shape{so[1], so[2], so[3]});
  }
  return out;
}

}  // namespace wavesr
