#include "wavesr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "wavesr/image_io.hpp"

namespace fs = std::filesystem;

namespace wavesr {

Tensor<float> image_to_tensor(const Image& im) {
  return Tensor<float>::from_values(Shape{1, 1, im.height, im.width}, im.pixels);
}

Image tensor_to_image(const Tensor<float>& t) {
  Shape s = t.shape();
  int h, w;
  if (s.rank == 4 && s[0] == 1 && s[1] == 1) {
    h = s[2];
    w = s[3];
  } else if (s.rank == 3 && s[0] == 1) {
    h = s[1];
    w = s[2];
  } else if (s.rank == 2) {
    h = s[0];
    w = s[1];
  } else {
    throw ShapeMismatch("tensor " + s.str() + " is not a single-channel image");
  }
  Image im = Image::make(h, w);
  im.pixels = t.values();
  return im;
}

Tensor<float> subbands_to_tensor(const SubbandSet& sb) {
  std::vector<float> v;
  v.reserve(sb.ll.size() * 4);
  v.insert(v.end(), sb.ll.begin(), sb.ll.end());
  v.insert(v.end(), sb.lh.begin(), sb.lh.end());
  v.insert(v.end(), sb.hl.begin(), sb.hl.end());
  v.insert(v.end(), sb.hh.begin(), sb.hh.end());
  return Tensor<float>::from_values(Shape{1, 4, sb.height, sb.width}, std::move(v));
}

SubbandSet tensor_to_subbands(const Tensor<float>& t, int parent_h, int parent_w) {
  Shape s = t.shape();
  if (s.rank != 4 || s[0] != 1 || s[1] != 4)
    throw ShapeMismatch("tensor " + s.str() + " is not a (1,4,h,w) subband stack");
  SubbandSet sb;
  sb.height = s[2];
  sb.width = s[3];
  sb.parent_height = parent_h;
  sb.parent_width = parent_w;
  std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const auto& v = t.values();
  sb.ll.assign(v.begin(), v.begin() + plane);
  sb.lh.assign(v.begin() + plane, v.begin() + 2 * plane);
  sb.hl.assign(v.begin() + 2 * plane, v.begin() + 3 * plane);
  sb.hh.assign(v.begin() + 3 * plane, v.begin() + 4 * plane);
  return sb;
}

Image resize_image(const Image& im, int out_h, int out_w, ResizeMode mode) {
  NoGradGuard ng;
  auto t = ops::resize(image_to_tensor(im), out_h, out_w, mode);
  Image out = tensor_to_image(t);
  out.range = im.range;
  return out;
}

std::vector<Image> extract_patches(const Image& img, const DatasetSpec& spec, std::uint64_t salt) {
  if (img.height < spec.patch || img.width < spec.patch)
    throw ImageTooSmall("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                        " below patch size " + std::to_string(spec.patch));
  Rng rng = Rng::derive(spec.seed, "patches", salt);
  std::vector<Image> out;
  out.reserve(spec.patches_per_image);
  for (int i = 0; i < spec.patches_per_image; ++i) {
    int y0 = rng.uniform_int(0, img.height - spec.patch);
    int x0 = rng.uniform_int(0, img.width - spec.patch);
    Image p = Image::make(spec.patch, spec.patch, img.range);
    for (int y = 0; y < spec.patch; ++y)
      for (int x = 0; x < spec.patch; ++x) p.at(y, x) = img.at(y0 + y, x0 + x);
    p.source_path = img.source_path;
    out.push_back(std::move(p));
  }
  return out;
}

PatchPair degrade(const Image& hr, int scale, PipelineMode mode) {
  if (hr.height % (2 * scale) != 0 || hr.width % (2 * scale) != 0)
    throw IndivisibleDims("hr " + std::to_string(hr.height) + "x" + std::to_string(hr.width) +
                          " not divisible by 2*s=" + std::to_string(2 * scale));
  PatchPair pair;
  pair.hr = hr;
  pair.scale = scale;
  pair.mode = mode;
  if (hr.source_path) pair.source_id = *hr.source_path;
  Image small = resize_image(hr, hr.height / scale, hr.width / scale, ResizeMode::Bicubic);
  pair.lr = mode == PipelineMode::PreInterpolated
                ? resize_image(small, hr.height, hr.width, ResizeMode::Bicubic)
                : small;
  return pair;
}

Dataset build_dataset(const DatasetSpec& spec) {
  auto matches = [&](const fs::path& p) {
    auto name = p.filename().string();
    auto ext = p.extension().string();
    bool raster = ext == ".png" || ext == ".pgm" || ext == ".wsrf";
    if (!raster) return false;
    if (spec.pattern == "*" || spec.pattern.empty()) return true;
    std::string suffix = spec.pattern;
    if (!suffix.empty() && suffix.front() == '*') suffix.erase(0, 1);
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  std::vector<std::string> files;
  if (!fs::is_directory(spec.root)) throw EmptyDataset(spec.root + " is not a directory");
  for (const auto& entry : fs::directory_iterator(spec.root))
    if (entry.is_regular_file() && matches(entry.path())) files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    throw EmptyDataset(spec.root + " holds " + std::to_string(files.size()) +
                       " usable images; need at least 2 to split");

  // seeded shuffle, then file-level split
  Rng rng = Rng::derive(spec.seed, "split");
  for (std::size_t i = files.size() - 1; i > 0; --i) {
    std::size_t j = rng.next_u64() % (i + 1);
    std::swap(files[i], files[j]);
  }
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(files.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, files.size() - 1);

  Dataset ds;
  for (std::size_t i = 0; i < files.size(); ++i) {
    bool is_train = i < n_train;
    (is_train ? ds.train_files : ds.val_files).push_back(files[i]);
    Image img = load_image(files[i]);
    for (auto& patch : extract_patches(img, spec, /*salt=*/i)) {
      PatchPair pair = degrade(patch, spec.scale, spec.mode);
      if (pair.hr.height % (2 * spec.scale) != 0)
        throw IndivisibleDims("emitted patch violates divisibility");
      (is_train ? ds.train : ds.val).push_back(std::move(pair));
    }
  }
  return ds;
}

Image synth_shapes_image(int size, Rng& rng) {
  Image im = Image::make(size, size);
  // smooth gradient background
  float gx = static_cast<float>(rng.uniform(-0.3, 0.3));
  float gy = static_cast<float>(rng.uniform(-0.3, 0.3));
  float g0 = static_cast<float>(rng.uniform(0.25, 0.75));
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      im.at(y, x) = g0 + gx * (static_cast<float>(x) / size - 0.5f) +
                    gy * (static_cast<float>(y) / size - 0.5f);

  auto blend = [&](int y, int x, float cover, float level) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    float& p = im.at(y, x);
    p = p * (1 - cover) + level * cover;
  };
  // anti-aliased coverage from a signed distance, one-pixel ramp
  auto coverage = [](float d) { return std::clamp(0.5f - d, 0.0f, 1.0f); };

  // a few large shapes, then plenty of thin structure so that bicubic
  // degradation has something to lose
  int n_big = rng.uniform_int(2, 4);
  for (int s = 0; s < n_big; ++s) {
    float level = static_cast<float>(rng.uniform(0.0, 1.0));
    float cx = static_cast<float>(rng.uniform(0.1, 0.9)) * size;
    float cy = static_cast<float>(rng.uniform(0.1, 0.9)) * size;
    if (rng.uniform_int(0, 1) == 0) {  // ellipse
      float rx = static_cast<float>(rng.uniform(0.08, 0.25)) * size;
      float ry = static_cast<float>(rng.uniform(0.08, 0.25)) * size;
      for (int y = static_cast<int>(cy - ry - 2); y <= static_cast<int>(cy + ry + 2); ++y)
        for (int x = static_cast<int>(cx - rx - 2); x <= static_cast<int>(cx + rx + 2); ++x) {
          float dx = (x - cx) / rx, dy = (y - cy) / ry;
          float r = std::sqrt(dx * dx + dy * dy);
          float d = (r - 1.0f) * std::min(rx, ry);  // approximate pixel distance
          blend(y, x, coverage(d), level);
        }
    } else {  // axis-aligned box
      float hw = static_cast<float>(rng.uniform(0.06, 0.2)) * size;
      float hh = static_cast<float>(rng.uniform(0.06, 0.2)) * size;
      for (int y = static_cast<int>(cy - hh - 2); y <= static_cast<int>(cy + hh + 2); ++y)
        for (int x = static_cast<int>(cx - hw - 2); x <= static_cast<int>(cx + hw + 2); ++x) {
          float d = std::max(std::abs(x - cx) - hw, std::abs(y - cy) - hh);
          blend(y, x, coverage(d), level);
        }
    }
  }
  int n_small = rng.uniform_int(4, 7);
  for (int s = 0; s < n_small; ++s) {
    float level = static_cast<float>(rng.uniform(0.0, 1.0));
    float cx = static_cast<float>(rng.uniform(0.05, 0.95)) * size;
    float cy = static_cast<float>(rng.uniform(0.05, 0.95)) * size;
    float r0 = static_cast<float>(rng.uniform(1.2, 3.5));
    for (int y = static_cast<int>(cy - r0 - 2); y <= static_cast<int>(cy + r0 + 2); ++y)
      for (int x = static_cast<int>(cx - r0 - 2); x <= static_cast<int>(cx + r0 + 2); ++x) {
        float dx = x - cx, dy = y - cy;
        float d = std::sqrt(dx * dx + dy * dy) - r0;
        blend(y, x, coverage(d), level);
      }
  }
  int n_lines = rng.uniform_int(5, 9);
  for (int s = 0; s < n_lines; ++s) {
    float level = static_cast<float>(rng.uniform(0.0, 1.0));
    float cx = static_cast<float>(rng.uniform(0.1, 0.9)) * size;
    float cy = static_cast<float>(rng.uniform(0.1, 0.9)) * size;
    float angle = static_cast<float>(rng.uniform(0.0, 3.14159265));
    float len = static_cast<float>(rng.uniform(0.2, 0.7)) * size;
    float thick = static_cast<float>(rng.uniform(0.5, 1.3));
    float ux = std::cos(angle), uy = std::sin(angle);
    int pad = static_cast<int>(len / 2 + 3);
    for (int y = std::max(0, (int)cy - pad); y < std::min(size, (int)cy + pad); ++y)
      for (int x = std::max(0, (int)cx - pad); x < std::min(size, (int)cx + pad); ++x) {
        float px = x - cx, py = y - cy;
        float t = std::clamp(px * ux + py * uy, -len / 2, len / 2);
        float dx = px - t * ux, dy = py - t * uy;
        float d = std::sqrt(dx * dx + dy * dy) - thick;
        blend(y, x, coverage(d), level);
      }
  }
  for (auto& p : im.pixels) p = std::clamp(p, 0.0f, 1.0f);
  return im;
}

void make_synthetic_corpus(const std::string& dir, int count, int size, std::uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, "synth", static_cast<std::uint64_t>(i));
    Image im = synth_shapes_image(size, rng);
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04d.png", i);
    save_png8((fs::path(dir) / name).string(), im);
  }
}

}  // namespace wavesr
