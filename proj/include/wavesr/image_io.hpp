#pragma once

#include <string>

#include "wavesr/wavelet.hpp"

namespace wavesr {

// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or PGM (P2/P5).
// Color is collapsed with Rec. 601 luminance; the result is unit-range.
Image load_image(const std::string& path);

// Writers quantize unit-range pixels with round-to-nearest.
void save_png8(const std::string& path, const Image& im);
void save_png16(const std::string& path, const Image& im);
void save_pgm(const std::string& path, const Image& im);

// Raw 32-bit float sidecar (little-endian, "WSRF" magic + dims), exact.
void save_raw_f32(const std::string& path, const Image& im);
Image load_raw_f32(const std::string& path);

}  // namespace wavesr
