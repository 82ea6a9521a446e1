#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "wavesr/wavelet.hpp"

namespace wavesr {

struct SsimConfig {
  enum class Mode { Global, Windowed };
  Mode mode = Mode::Windowed;
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 255.0;

  double c1() const { return (k1 * peak) * (k1 * peak); }
  double c2() const { return (k2 * peak) * (k2 * peak); }
};

// 10*log10(peak^2 / MSE) on byte-range values; +infinity when MSE = 0.
// Unit-range pairs are rescaled by 255 internally.
double psnr(const Image& s, const Image& s_hat);

// Global mode evaluates the SSIM formula once on whole-image statistics;
// windowed mode averages it over an 11x11 Gaussian sliding window.
double ssim(const Image& x, const Image& y, const SsimConfig& cfg);

struct MetricRow {
  std::string name;
  double psnr_db = 0;
  double ssim = 0;
};

struct MetricTable {
  std::vector<MetricRow> rows;
  MetricRow mean;
  SsimConfig cfg;
  bool rescaled_unit_inputs = false;
};

// Pairs files by identical name across the two folders, sorted by filename.
MetricTable evaluate_folder(const std::string& sr_dir, const std::string& hr_dir,
                            const SsimConfig& cfg);

// filename \t psnr_db \t ssim rows, a final mean row, and a leading
// "# ..." header line recording the configuration
void write_metric_table_tsv(std::ostream& os, const MetricTable& table);
// same rows as line-delimited JSON records
void write_metric_table_jsonl(std::ostream& os, const MetricTable& table);

}  // namespace wavesr
