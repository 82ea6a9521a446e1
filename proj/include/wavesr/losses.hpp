#pragma once

// Training objectives and the experiment-table variant selector.
//
// The critic loss is the WGAN objective with gradient penalty:
//   -E[d(real)] + E[d(fake)] + lambda * E[(||grad_xhat d(xhat)||_2 - 1)^2]
// with xhat = eps*real + (1-eps)*fake, eps ~ U[0,1] per sample from the
// caller's stream. The penalty is built with create_graph gradients, so
// backpropagating the returned loss reaches critic parameters through the
// input-gradient norm itself.

#include <optional>
#include <string>

#include "wavesr/networks.hpp"
#include "wavesr/ops.hpp"

namespace wavesr {

enum class LossVariant { CnnVgg, Wgan, Perceptual, WganVgg, WganMaP };

inline const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::CnnVgg: return "CNN-VGG";
    case LossVariant::Wgan: return "WGAN";
    case LossVariant::Perceptual: return "Perceptual";
    case LossVariant::WganVgg: return "WGAN-VGG";
    case LossVariant::WganMaP: return "WGAN-MA-P";
  }
  return "?";
}

inline LossVariant loss_variant_from(const std::string& s) {
  if (s == "CNN-VGG") return LossVariant::CnnVgg;
  if (s == "WGAN") return LossVariant::Wgan;
  if (s == "Perceptual") return LossVariant::Perceptual;
  if (s == "WGAN-VGG") return LossVariant::WganVgg;
  if (s == "WGAN-MA-P") return LossVariant::WganMaP;
  throw ConfigError("unknown loss variant '" + s + "'");
}

// adversarial / reconstruction terms active per experiment-table row
inline bool variant_uses_adversarial(LossVariant v) {
  return v == LossVariant::Wgan || v == LossVariant::WganVgg || v == LossVariant::WganMaP;
}
inline bool variant_uses_perceptual(LossVariant v) { return v != LossVariant::Wgan; }
// rows whose generator column reads "Multi-attention"
inline bool variant_uses_attention_generator(LossVariant v) {
  return v == LossVariant::Perceptual || v == LossVariant::WganMaP;
}
// rows whose reconstruction term is the natural-image-pretrained encoder
inline bool variant_uses_natural_encoder(LossVariant v) {
  return v == LossVariant::CnnVgg || v == LossVariant::WganVgg;
}

struct LossConfig {
  LossVariant variant = LossVariant::WganMaP;
  double beta = 0.1;       // perceptual weight
  double lambda_gp = 10.0; // gradient-penalty weight
  int critic_steps = 5;    // critic updates per generator update
};

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch("mse_loss " + a.shape().str() + " vs " + b.shape().str());
  return ops::mean_all(ops::square(ops::sub(a, b)));
}

// ||f_sr - f_hr||_F^2 / (D*H*W) per sample = elementwise mean of the
// squared feature difference
template <typename T>
Tensor<T> feature_distance(const Tensor<T>& f_sr, const Tensor<T>& f_hr) {
  if (f_sr.shape() != f_hr.shape())
    throw ShapeMismatch("feature_distance " + f_sr.shape().str() + " vs " + f_hr.shape().str());
  return ops::mean_all(ops::square(ops::sub(f_sr, f_hr)));
}

template <typename T>
Tensor<T> perceptual_loss(const PerceptualEncoder<T>& encoder, const Tensor<T>& sr,
                          const Tensor<T>& hr) {
  if (sr.shape() != hr.shape())
    throw ShapeMismatch("perceptual_loss " + sr.shape().str() + " vs " + hr.shape().str());
  return feature_distance(encoder.forward(sr), encoder.forward(hr));
}

template <typename T>
struct CriticLossParts {
  Tensor<T> loss;             // full objective (graph tensor)
  double wasserstein = 0;     // E[d(real)] - E[d(fake)]
  double penalty = 0;         // unweighted penalty term value
};

// Scores either batch with any callable critic; Critic<T>::forward fits.
template <typename T, typename CriticFn>
CriticLossParts<T> critic_loss_with(const CriticFn& critic, const Tensor<T>& real,
                                    const Tensor<T>& fake, double lambda_gp, Rng& rng) {
  if (real.shape() != fake.shape())
    throw ShapeMismatch("critic_loss " + real.shape().str() + " vs " + fake.shape().str());
  auto d_real = critic(real);
  auto d_fake = critic(fake);
  auto base = ops::sub(ops::mean_all(d_fake), ops::mean_all(d_real));

  CriticLossParts<T> parts;
  parts.wasserstein = -static_cast<double>(base.item());
  if (lambda_gp == 0.0) {
    parts.loss = base;
    return parts;
  }

  Shape s = real.shape();
  int n = s.rank == 4 ? s[0] : 1;
  std::size_t per = real.numel() / n;
  std::vector<T> mix(real.numel());
  const auto &rv = real.values(), &fv = fake.values();
  for (int i = 0; i < n; ++i) {
    T eps = static_cast<T>(rng.uniform());
    for (std::size_t j = 0; j < per; ++j) {
      std::size_t o = i * per + j;
      mix[o] = eps * rv[o] + (T(1) - eps) * fv[o];
    }
  }
  auto xhat = Tensor<T>::from_values(s, std::move(mix)).set_requires_grad(true);
  auto score_sum = ops::sum_all(critic(xhat));
  auto gx = Tensor<T>::grad_of(score_sum, {xhat}, /*create_graph=*/true)[0];
  Tensor<T> sq = ops::square(gx);
  Tensor<T> per_sample = s.rank == 4 ? ops::sum_chw(sq) : ops::sum_all(sq);
  auto norms = ops::sqrt_t(per_sample);
  auto pen = ops::mean_all(ops::square(ops::add_scalar(norms, T(-1))));
  parts.penalty = static_cast<double>(pen.item());
  parts.loss = ops::add(base, ops::mul_scalar(pen, static_cast<T>(lambda_gp)));
  return parts;
}

template <typename T>
CriticLossParts<T> critic_loss(const Critic<T>& critic, const Tensor<T>& real,
                               const Tensor<T>& fake, double lambda_gp, Rng& rng) {
  return critic_loss_with<T>([&](const Tensor<T>& x) { return critic.forward(x); }, real, fake,
                             lambda_gp, rng);
}

template <typename T>
Tensor<T> generator_adv_loss(const Critic<T>& critic, const Tensor<T>& fake) {
  return ops::neg(ops::mean_all(critic.forward(fake)));
}

template <typename T>
struct GeneratorLossParts {
  std::optional<Tensor<T>> adversarial;
  std::optional<Tensor<T>> perceptual;
};

template <typename T>
Tensor<T> total_generator_loss(const LossConfig& cfg, const GeneratorLossParts<T>& parts) {
  bool want_adv = variant_uses_adversarial(cfg.variant);
  bool want_perc = variant_uses_perceptual(cfg.variant);
  if (want_adv != parts.adversarial.has_value())
    throw VariantTermMismatch(std::string(to_string(cfg.variant)) +
                              (want_adv ? " needs an adversarial term" : " takes no adversarial term"));
  if (want_perc != parts.perceptual.has_value())
    throw VariantTermMismatch(std::string(to_string(cfg.variant)) +
                              (want_perc ? " needs a perceptual term" : " takes no perceptual term"));
  if (want_adv && want_perc)
    return ops::add(*parts.adversarial,
                    ops::mul_scalar(*parts.perceptual, static_cast<T>(cfg.beta)));
  if (want_adv) return *parts.adversarial;
  return *parts.perceptual;
}

}  // namespace wavesr
