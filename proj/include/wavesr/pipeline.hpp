#pragma once

// End-to-end inference: scatter (DWT), predict (generator), reconstruct (IDWT).

#include <algorithm>

#include "wavesr/data.hpp"
#include "wavesr/networks.hpp"
#include "wavesr/wavelet.hpp"

namespace wavesr {

// pre_interpolated: bicubic-up by s, DWT, generator, IDWT.
// progressive: DWT of the raw LR image; the generator upsamples internally.
// Output is clipped to the unit range.
inline Image super_resolve(const Image& lr, const Generator<float>& gen) {
  NoGradGuard ng;
  const auto& cfg = gen.config();
  Image base = lr;
  if (cfg.mode == PipelineMode::PreInterpolated)
    base = resize_image(lr, lr.height * cfg.scale, lr.width * cfg.scale, ResizeMode::Bicubic);
  auto sb = dwt2_haar(base);
  auto predicted = gen.forward(subbands_to_tensor(sb));
  Shape s = predicted.shape();
  Image out = idwt2_haar(tensor_to_subbands(predicted, s[2] * 2, s[3] * 2));
  out.range = lr.range;
  for (auto& p : out.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return out;
}

}  // namespace wavesr
