#include "wavesr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "wavesr/image_io.hpp"

namespace fs = std::filesystem;

namespace wavesr {

namespace {

// byte-range views of the two images; Unit inputs are scaled by 255
std::pair<std::vector<double>, std::vector<double>> byte_range_pair(const Image& a,
                                                                    const Image& b,
                                                                    bool* rescaled = nullptr) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeMismatch("images are " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                        " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  if (a.range != b.range)
    throw RangeTagMismatch("cannot compare unit-range against byte-range pixels");
  double scale = a.range == RangeTag::Unit ? 255.0 : 1.0;
  if (rescaled) *rescaled = a.range == RangeTag::Unit;
  std::vector<double> av(a.pixels.size()), bv(b.pixels.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    av[i] = a.pixels[i] * scale;
    bv[i] = b.pixels[i] * scale;
  }
  return {std::move(av), std::move(bv)};
}

double ssim_formula(double mx, double my, double vx, double vy, double cov, double c1, double c2) {
  return ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

double psnr(const Image& s, const Image& s_hat) {
  auto [a, b] = byte_range_pair(s, s_hat);
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& x, const Image& y, const SsimConfig& cfg) {
  auto [a, b] = byte_range_pair(x, y);
  const double c1 = cfg.c1(), c2 = cfg.c2();
  const std::size_t n = a.size();

  if (cfg.mode == SsimConfig::Mode::Global) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += a[i];
      my += b[i];
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vx += (a[i] - mx) * (a[i] - mx);
      vy += (b[i] - my) * (b[i] - my);
      cov += (a[i] - mx) * (b[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    return ssim_formula(mx, my, vx, vy, cov, c1, c2);
  }

  const int w = cfg.window;
  const int h = x.height, wd = x.width;
  if (h < w || wd < w)
    throw ImageSmallerThanWindow(std::to_string(h) + "x" + std::to_string(wd) + " vs window " +
                                 std::to_string(w));
  // normalized separable Gaussian
  std::vector<double> g(w);
  double gsum = 0;
  for (int i = 0; i < w; ++i) {
    double d = i - (w - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * cfg.sigma * cfg.sigma));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;

  double total = 0;
  int count = 0;
  for (int oy = 0; oy + w <= h; ++oy)
    for (int ox = 0; ox + w <= wd; ++ox) {
      double mx = 0, my = 0;
      for (int ky = 0; ky < w; ++ky)
        for (int kx = 0; kx < w; ++kx) {
          double wt = g[ky] * g[kx];
          mx += wt * a[static_cast<std::size_t>(oy + ky) * wd + ox + kx];
          my += wt * b[static_cast<std::size_t>(oy + ky) * wd + ox + kx];
        }
      double vx = 0, vy = 0, cov = 0;
      for (int ky = 0; ky < w; ++ky)
        for (int kx = 0; kx < w; ++kx) {
          double wt = g[ky] * g[kx];
          double da = a[static_cast<std::size_t>(oy + ky) * wd + ox + kx] - mx;
          double db = b[static_cast<std::size_t>(oy + ky) * wd + ox + kx] - my;
          vx += wt * da * da;
          vy += wt * db * db;
          cov += wt * da * db;
        }
      total += ssim_formula(mx, my, vx, vy, cov, c1, c2);
      ++count;
    }
  return total / count;
}

MetricTable evaluate_folder(const std::string& sr_dir, const std::string& hr_dir,
                            const SsimConfig& cfg) {
  auto is_raster = [](const fs::path& p) {
    auto e = p.extension().string();
    return e == ".png" || e == ".pgm" || e == ".wsrf";
  };
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(sr_dir))
    if (entry.is_regular_file() && is_raster(entry.path()))
      names.insert(entry.path().filename().string());
  if (names.empty()) throw EmptyDataset("no raster files in " + sr_dir);

  MetricTable table;
  table.cfg = cfg;
  double psnr_sum = 0, ssim_sum = 0;
  for (const auto& name : names) {
    fs::path hr_path = fs::path(hr_dir) / name;
    if (!fs::exists(hr_path)) throw MissingCounterpart(name + " has no file in " + hr_dir);
    Image sr = load_image((fs::path(sr_dir) / name).string());
    Image hr = load_image(hr_path.string());
    table.rescaled_unit_inputs = sr.range == RangeTag::Unit;
    MetricRow row;
    row.name = name;
    row.psnr_db = psnr(sr, hr);
    row.ssim = ssim(sr, hr, cfg);
    psnr_sum += row.psnr_db;
    ssim_sum += row.ssim;
    table.rows.push_back(std::move(row));
  }
  table.mean.name = "mean";
  table.mean.psnr_db = psnr_sum / table.rows.size();
  table.mean.ssim = ssim_sum / table.rows.size();
  return table;
}

namespace {

void header_comment(std::ostream& os, const MetricTable& t) {
  os << "# ssim_mode=" << (t.cfg.mode == SsimConfig::Mode::Global ? "global" : "windowed")
     << " window=" << t.cfg.window << " sigma=" << t.cfg.sigma << " K1=" << t.cfg.k1
     << " K2=" << t.cfg.k2 << " L=" << t.cfg.peak
     << " rescaled_unit_inputs=" << (t.rescaled_unit_inputs ? "yes" : "no") << "\n";
}

}  // namespace

void write_metric_table_tsv(std::ostream& os, const MetricTable& table) {
  header_comment(os, table);
  os << "filename\tpsnr_db\tssim\n";
  auto row = [&](const MetricRow& r) {
    os << r.name << "\t" << r.psnr_db << "\t" << r.ssim << "\n";
  };
  for (const auto& r : table.rows) row(r);
  row(table.mean);
}

void write_metric_table_jsonl(std::ostream& os, const MetricTable& table) {
  auto emit = [&](const MetricRow& r) {
    nlohmann::json j{{"filename", r.name}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}};
    os << j.dump() << "\n";
  };
  for (const auto& r : table.rows) emit(r);
  emit(table.mean);
}

}  // namespace wavesr
