#pragma once

#include <string>
#include <vector>

#include "wavesr/networks.hpp"
#include "wavesr/tensor.hpp"
#include "wavesr/wavelet.hpp"

namespace wavesr {

struct PatchPair {
  Image hr;  // even-dimension patch
  Image lr;  // pre_interpolated: degraded-and-reupsampled to hr size; progressive: hr size / s
  int scale = 2;
  PipelineMode mode = PipelineMode::PreInterpolated;
  std::string source_id;
};

struct DatasetSpec {
  std::string root;
  std::string pattern = "*";     // filename suffix filter, e.g. "*.png"
  double train_fraction = 0.8;   // validation gets the rest
  int patch = 56;
  int patches_per_image = 4;
  std::uint64_t seed = 0;
  int scale = 2;
  PipelineMode mode = PipelineMode::PreInterpolated;
};

struct Dataset {
  std::vector<PatchPair> train;
  std::vector<PatchPair> val;
  std::vector<std::string> train_files;
  std::vector<std::string> val_files;
};

// tensor <-> image glue
Tensor<float> image_to_tensor(const Image& im);        // (1,1,H,W)
Image tensor_to_image(const Tensor<float>& t);         // from (1,1,H,W), (1,H,W) or (H,W)
Tensor<float> subbands_to_tensor(const SubbandSet& s); // (1,4,h,w)
SubbandSet tensor_to_subbands(const Tensor<float>& t, int parent_h, int parent_w);

Image resize_image(const Image& im, int out_h, int out_w, ResizeMode mode);

// n seeded random crops, fully inside the image; deterministic per (seed, salt)
std::vector<Image> extract_patches(const Image& img, const DatasetSpec& spec,
                                   std::uint64_t salt = 0);

// bicubic downsample by s; pre_interpolated mode re-upsamples to hr size
PatchPair degrade(const Image& hr, int scale, PipelineMode mode);

// file-level seeded split, then per-file patch extraction; no image
// contributes to both streams
Dataset build_dataset(const DatasetSpec& spec);

// synthetic-shapes corpus: gradient background with anti-aliased ellipses,
// boxes and lines; enough edge content for desk-scale experiments
Image synth_shapes_image(int size, Rng& rng);
void make_synthetic_corpus(const std::string& dir, int count, int size, std::uint64_t seed);

}  // namespace wavesr
