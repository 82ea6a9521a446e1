#include "wavesr/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace wavesr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

float luma601(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

Image load_png(const std::string& path, std::FILE* f) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw UnreadableImage(path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw UnreadableImage(path);
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableImage(path + " (corrupt PNG)");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  int channels = png_get_channels(png, info);
  if ((color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) || (depth != 8 && depth != 16))
    throw UnsupportedFormat(path + " (color type " + std::to_string(color) + ", depth " +
                            std::to_string(depth) + ")");

  std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * h);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = data.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image im = Image::make(static_cast<int>(h), static_cast<int>(w), RangeTag::Unit);
  im.source_path = path;
  const float inv8 = 1.0f / 255.0f, inv16 = 1.0f / 65535.0f;
  for (png_uint_32 y = 0; y < h; ++y) {
    const png_byte* row = data.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < w; ++x) {
      float px;
      if (depth == 8) {
        const png_byte* p = row + x * channels;
        px = channels == 1 ? p[0] * inv8 : luma601(p[0] * inv8, p[1] * inv8, p[2] * inv8);
      } else {  // PNG stores 16-bit big-endian
        const png_byte* p = row + x * channels * 2;
        auto u16 = [&](int c) { return static_cast<float>((p[2 * c] << 8) | p[2 * c + 1]); };
        px = channels == 1 ? u16(0) * inv16
                           : luma601(u16(0) * inv16, u16(1) * inv16, u16(2) * inv16);
      }
      im.at(static_cast<int>(y), static_cast<int>(x)) = px;
    }
  }
  return im;
}

int pgm_next_token(std::FILE* f, char* buf, int cap) {
  int c;
  do {
    c = std::fgetc(f);
    if (c == '#') {
      while (c != '\n' && c != EOF) c = std::fgetc(f);
    }
  } while (c != EOF && std::isspace(c));
  int n = 0;
  while (c != EOF && !std::isspace(c) && n < cap - 1) {
    buf[n++] = static_cast<char>(c);
    c = std::fgetc(f);
  }
  buf[n] = 0;
  return n;
}

Image load_pgm(const std::string& path, std::FILE* f, bool binary) {
  char tok[64];
  auto next_int = [&](long& out) {
    if (!pgm_next_token(f, tok, sizeof tok)) throw UnreadableImage(path + " (truncated PGM)");
    out = std::strtol(tok, nullptr, 10);
  };
  long w, h, maxval;
  next_int(w);
  next_int(h);
  next_int(maxval);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw UnsupportedFormat(path + " (bad PGM header)");
  Image im = Image::make(static_cast<int>(h), static_cast<int>(w), RangeTag::Unit);
  im.source_path = path;
  float inv = 1.0f / static_cast<float>(maxval);
  std::size_t n = static_cast<std::size_t>(w) * h;
  if (binary) {
    int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bytes);
    if (std::fread(buf.data(), 1, buf.size(), f) != buf.size())
      throw UnreadableImage(path + " (truncated PGM payload)");
    for (std::size_t i = 0; i < n; ++i) {
      unsigned v = bytes == 1 ? buf[i] : (unsigned(buf[2 * i]) << 8) | buf[2 * i + 1];
      im.pixels[i] = v * inv;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      long v;
      next_int(v);
      im.pixels[i] = static_cast<float>(v) * inv;
    }
  }
  return im;
}

}  // namespace

Image load_image(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw UnreadableImage(path);
  unsigned char magic[8] = {0};
  std::size_t got = std::fread(magic, 1, 8, f.get());
  if (got >= 4 && std::memcmp(magic, "WSRF", 4) == 0) {
    f.reset();
    return load_raw_f32(path);
  }
  if (got == 8 && png_sig_cmp(magic, 0, 8) == 0) {
    std::rewind(f.get());
    return load_png(path, f.get());
  }
  if (got >= 2 && magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) {
    std::fseek(f.get(), 2, SEEK_SET);
    return load_pgm(path, f.get(), magic[1] == '5');
  }
  throw UnsupportedFormat(path + " (not PNG or PGM)");
}

namespace {

void save_png_impl(const std::string& path, const Image& im, int depth) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw UnreadableImage("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    throw UnreadableImage("libpng init failed for " + path);
  }
  std::vector<png_byte> row(static_cast<std::size_t>(im.width) * (depth / 8));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw UnreadableImage("PNG write failed for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, im.width, im.height, depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  float peak = depth == 8 ? 255.0f : 65535.0f;
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      float v = std::min(1.0f, std::max(0.0f, im.at(y, x)));
      unsigned q = static_cast<unsigned>(std::lround(v * peak));
      if (depth == 8) {
        row[x] = static_cast<png_byte>(q);
      } else {
        row[2 * x] = static_cast<png_byte>(q >> 8);
        row[2 * x + 1] = static_cast<png_byte>(q & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void save_png8(const std::string& path, const Image& im) { save_png_impl(path, im, 8); }
void save_png16(const std::string& path, const Image& im) { save_png_impl(path, im, 16); }

void save_pgm(const std::string& path, const Image& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableImage("cannot write " + path);
  out << "P5\n" << im.width << " " << im.height << "\n255\n";
  std::vector<unsigned char> buf(im.pixels.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, im.pixels[i]));
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void save_raw_f32(const std::string& path, const Image& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableImage("cannot write " + path);
  std::uint32_t dims[2] = {static_cast<std::uint32_t>(im.height),
                           static_cast<std::uint32_t>(im.width)};
  out.write("WSRF", 4);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(im.pixels.data()),
            static_cast<std::streamsize>(im.pixels.size() * sizeof(float)));
}

Image load_raw_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableImage(path);
  char magic[4];
  std::uint32_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, "WSRF", 4) != 0) throw UnreadableImage(path + " (bad raw header)");
  Image im = Image::make(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  im.source_path = path;
  in.read(reinterpret_cast<char*>(im.pixels.data()),
          static_cast<std::streamsize>(im.pixels.size() * sizeof(float)));
  if (!in) throw UnreadableImage(path + " (truncated raw payload)");
  return im;
}

}  // namespace wavesr
