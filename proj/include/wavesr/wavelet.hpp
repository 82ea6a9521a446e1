#pragma once

// Level-1 Haar 2-D DWT and its exact inverse.
//
// Forward coefficients use the 1/4 block-sum normalization so that the
// unit-coefficient inverse (A=a+b+c+d, B=a-b+c-d, C=a+b-c-d, D=a-b-c+d)
// reconstructs exactly. Letter binding, fixed here once and for all:
//   ll = (A+B+C+D)/4   block average
//   lh = (A-B+C-D)/4   column-difference detail
//   hl = (A+B-C-D)/4   row-difference detail
//   hh = (A-B-C+D)/4   diagonal detail
// where A,B,C,D walk the 2x2 block row-major. An orthonormal (1/2,1/2)
// split would scale learned weights by constant factors; this library fixes
// the 1/4 convention everywhere.

#include <optional>
#include <string>
#include <vector>

#include "wavesr/common.hpp"

namespace wavesr {

enum class RangeTag { Unit, Byte };

struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major
  RangeTag range = RangeTag::Unit;
  std::optional<std::string> source_path;

  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  static Image make(int h, int w, RangeTag tag = RangeTag::Unit, float fill = 0.f) {
    Image im;
    im.height = h;
    im.width = w;
    im.range = tag;
    im.pixels.assign(static_cast<std::size_t>(h) * w, fill);
    return im;
  }
};

template <typename T>
struct Subbands {
  int height = 0;  // subband grid, parent/2
  int width = 0;
  std::vector<T> ll, lh, hl, hh;
  int parent_height = 0;
  int parent_width = 0;
};

using SubbandSet = Subbands<float>;

template <typename T>
Subbands<T> dwt2_haar_impl(const std::vector<T>& pixels, int h, int w) {
  if (h % 2 != 0 || w % 2 != 0)
    throw OddDimension("image is " + std::to_string(h) + "x" + std::to_string(w) +
                       "; crop or pad to even dimensions upstream");
  if (h < 2 || w < 2) throw OddDimension("image smaller than one 2x2 block");
  Subbands<T> out;
  out.height = h / 2;
  out.width = w / 2;
  out.parent_height = h;
  out.parent_width = w;
  std::size_t n = static_cast<std::size_t>(out.height) * out.width;
  out.ll.resize(n);
  out.lh.resize(n);
  out.hl.resize(n);
  out.hh.resize(n);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      T a = pixels[static_cast<std::size_t>(2 * y) * w + 2 * x];
      T b = pixels[static_cast<std::size_t>(2 * y) * w + 2 * x + 1];
      T c = pixels[static_cast<std::size_t>(2 * y + 1) * w + 2 * x];
      T d = pixels[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1];
      std::size_t o = static_cast<std::size_t>(y) * out.width + x;
      out.ll[o] = (a + b + c + d) / T(4);
      out.lh[o] = (a - b + c - d) / T(4);
      out.hl[o] = (a + b - c - d) / T(4);
      out.hh[o] = (a - b - c + d) / T(4);
    }
  return out;
}

template <typename T>
std::vector<T> idwt2_haar_impl(const Subbands<T>& sb) {
  std::size_t n = static_cast<std::size_t>(sb.height) * sb.width;
  if (sb.lh.size() != n || sb.hl.size() != n || sb.hh.size() != n || sb.ll.size() != n)
    throw ShapeMismatch("subband arrays differ in shape");
  int h = sb.height * 2, w = sb.width * 2;
  std::vector<T> pixels(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < sb.height; ++y)
    for (int x = 0; x < sb.width; ++x) {
      std::size_t o = static_cast<std::size_t>(y) * sb.width + x;
      T a = sb.ll[o], b = sb.lh[o], c = sb.hl[o], d = sb.hh[o];
      pixels[static_cast<std::size_t>(2 * y) * w + 2 * x] = a + b + c + d;
      pixels[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] = a - b + c - d;
      pixels[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] = a + b - c - d;
      pixels[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1] = a - b - c + d;
    }
  return pixels;
}

inline SubbandSet dwt2_haar(const Image& image) {
  return dwt2_haar_impl(image.pixels, image.height, image.width);
}

inline Image idwt2_haar(const SubbandSet& sb) {
  Image im;
  im.height = sb.height * 2;
  im.width = sb.width * 2;
  im.pixels = idwt2_haar_impl(sb);
  return im;
}

// forward normalization constant recorded in subband manifests
inline constexpr double kDwtForwardNorm = 0.25;

}  // namespace wavesr
