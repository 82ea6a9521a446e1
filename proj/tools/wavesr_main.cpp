// wavesr command-line interface.
//
// Exit codes: 0 ok, 1 configuration error, 2 I/O or shape error,
// 3 training divergence.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "wavesr/config.hpp"
#include "wavesr/image_io.hpp"
#include "wavesr/metrics.hpp"
#include "wavesr/pipeline.hpp"
#include "wavesr/trainer.hpp"

namespace fs = std::filesystem;
using namespace wavesr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitDiverged = 3;

struct GlobalFlags {
  std::string config_path;
  std::optional<long> seed;
  std::string out;
  std::string mode;
  int scale = 0;
};

RunConfig load_config_with_overrides(const GlobalFlags& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
  if (g.seed) cfg.train.seed = static_cast<std::uint64_t>(*g.seed);
  if (!g.out.empty()) cfg.train.out_dir = g.out;
  if (!g.mode.empty()) cfg.gen.mode = pipeline_mode_from(g.mode);
  if (g.scale != 0) cfg.gen.scale = g.scale;
  finalize_run_config(cfg);
  return cfg;
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void save_output_image(const std::string& path, const Image& im) {
  if (fs::path(path).extension() == ".pgm")
    save_pgm(path, im);
  else
    save_png8(path, im);
}

// ---- decompose --------------------------------------------------------------

int cmd_decompose(const std::string& input, const std::string& out_dir, bool raw) {
  Image im = load_image(input);
  if (im.height % 2 != 0 || im.width % 2 != 0)
    throw OddDimension("input is " + std::to_string(im.height) + "x" + std::to_string(im.width) +
                       "; both dimensions must be even");
  auto sb = dwt2_haar(im);
  fs::create_directories(out_dir);
  std::string stem = stem_of(input);

  auto write_band = [&](const std::string& suffix, const std::vector<float>& band, bool detail) {
    Image b = Image::make(sb.height, sb.width);
    for (std::size_t i = 0; i < band.size(); ++i)
      b.pixels[i] = detail ? 0.5f + band[i] * 0.5f : band[i];
    save_png16((fs::path(out_dir) / (stem + "_" + suffix + ".png")).string(), b);
    if (raw) {
      Image rawb = Image::make(sb.height, sb.width);
      rawb.pixels = band;
      save_raw_f32((fs::path(out_dir) / (stem + "_" + suffix + ".wsrf")).string(), rawb);
    }
  };
  write_band("LL", sb.ll, false);
  write_band("LH", sb.lh, true);
  write_band("HL", sb.hl, true);
  write_band("HH", sb.hh, true);

  std::ofstream manifest(fs::path(out_dir) / (stem + "_manifest.txt"));
  manifest << "stem=" << stem << " parent_shape=" << sb.parent_height << "x" << sb.parent_width
           << " forward_norm=" << kDwtForwardNorm
           << " detail_offset=0.5 detail_scale=0.5 depth=16 raw=" << (raw ? 1 : 0) << "\n";
  std::cout << "wrote 4 subband files and manifest for '" << stem << "' in " << out_dir << "\n";
  return kExitOk;
}

// ---- reconstruct ------------------------------------------------------------

std::map<std::string, std::string> parse_manifest_line(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UnreadableImage(path);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

int cmd_reconstruct(const std::string& dir, std::string stem, const std::string& out) {
  if (stem.empty()) {
    for (const auto& e : fs::directory_iterator(dir)) {
      auto name = e.path().filename().string();
      auto pos = name.find("_manifest.txt");
      if (pos != std::string::npos) {
        if (!stem.empty())
          throw UnreadableImage("multiple manifests in " + dir + "; pass a stem explicitly");
        stem = name.substr(0, pos);
      }
    }
    if (stem.empty()) throw UnreadableImage("no *_manifest.txt in " + dir);
  }
  auto kv = parse_manifest_line((fs::path(dir) / (stem + "_manifest.txt")).string());
  if (!kv.count("parent_shape")) throw UnreadableImage("manifest lacks parent_shape");
  int ph = 0, pw = 0;
  if (std::sscanf(kv.at("parent_shape").c_str(), "%dx%d", &ph, &pw) != 2)
    throw UnreadableImage("manifest parent_shape is malformed");
  bool raw = kv.count("raw") && kv.at("raw") == "1";

  auto read_band = [&](const std::string& suffix, bool detail) {
    fs::path rp = fs::path(dir) / (stem + "_" + suffix + ".wsrf");
    fs::path pp = fs::path(dir) / (stem + "_" + suffix + ".png");
    Image b;
    if (raw && fs::exists(rp)) {
      b = load_image(rp.string());
    } else {
      if (!fs::exists(pp)) throw UnreadableImage("missing subband file " + pp.string());
      b = load_image(pp.string());
      if (detail)
        for (auto& p : b.pixels) p = (p - 0.5f) * 2.0f;
    }
    return b;
  };
  Image ll = read_band("LL", false);
  Image lh = read_band("LH", true);
  Image hl = read_band("HL", true);
  Image hh = read_band("HH", true);
  if (lh.height != ll.height || hl.height != ll.height || hh.height != ll.height ||
      lh.width != ll.width || hl.width != ll.width || hh.width != ll.width)
    throw ShapeMismatch("subband files disagree on shape");
  if (ph != 2 * ll.height || pw != 2 * ll.width)
    throw ShapeMismatch("manifest parent_shape " + kv.at("parent_shape") +
                        " does not match subband grid " + std::to_string(ll.height) + "x" +
                        std::to_string(ll.width));
  SubbandSet sb;
  sb.height = ll.height;
  sb.width = ll.width;
  sb.parent_height = ph;
  sb.parent_width = pw;
  sb.ll = ll.pixels;
  sb.lh = lh.pixels;
  sb.hl = hl.pixels;
  sb.hh = hh.pixels;
  Image rec = idwt2_haar(sb);
  for (auto& p : rec.pixels) p = std::clamp(p, 0.0f, 1.0f);
  std::string out_path = out.empty() ? (fs::path(dir) / (stem + "_reconstructed.png")).string()
                                     : out;
  save_output_image(out_path, rec);
  std::cout << "reconstructed " << ph << "x" << pw << " image -> " << out_path << "\n";
  return kExitOk;
}

// ---- sr ---------------------------------------------------------------------

int cmd_sr(const std::string& input, const std::string& checkpoint, const std::string& out,
           const std::string& reference, const GlobalFlags& g) {
  auto gen = load_generator(checkpoint);
  const auto& cfg = gen->config();
  if (!g.mode.empty() && pipeline_mode_from(g.mode) != cfg.mode)
    throw ArchitectureMismatch("checkpoint was trained in " + std::string(to_string(cfg.mode)) +
                               " mode");
  if (g.scale != 0 && g.scale != cfg.scale)
    throw ArchitectureMismatch("checkpoint was trained at scale " + std::to_string(cfg.scale));
  Image lr = load_image(input);
  if (cfg.mode == PipelineMode::Progressive && (lr.height % 2 != 0 || lr.width % 2 != 0))
    throw OddDimension("progressive mode needs even input dimensions, got " +
                       std::to_string(lr.height) + "x" + std::to_string(lr.width));
  Image sr = super_resolve(lr, *gen);
  std::string out_path = out.empty() ? stem_of(input) + "_sr.png" : out;
  save_output_image(out_path, sr);
  std::cout << "wrote " << sr.height << "x" << sr.width << " result -> " << out_path << "\n";
  if (!reference.empty()) {
    Image ref = load_image(reference);
    SsimConfig scfg;
    if (ref.height < scfg.window || ref.width < scfg.window) scfg.mode = SsimConfig::Mode::Global;
    std::cout << "psnr_db " << psnr(ref, sr) << "\n";
    std::cout << "ssim " << ssim(ref, sr, scfg) << "\n";
  }
  return kExitOk;
}

// ---- training-family commands -------------------------------------------------

PerceptualEncoder<float> obtain_encoder(const RunConfig& cfg, const Dataset& data,
                                        const std::string& which) {
  const std::string& path =
      which == "vgg" ? cfg.vgg_encoder_checkpoint : cfg.encoder_checkpoint;
  if (!path.empty()) return load_encoder(path);
  std::cout << "no pretrained " << (which == "vgg" ? "vgg-style " : "") << "encoder given; "
            << "pretraining one (" << cfg.pretrain_epochs << " epochs)\n";
  TrainConfig pcfg = cfg.train;
  pcfg.epochs = cfg.pretrain_epochs;
  pcfg.max_generator_steps = -1;
  pcfg.out_dir = cfg.train.out_dir + "/encoder";
  pcfg.config_echo = cfg.echo();
  auto outcome = pretrain_perceptual(data, pcfg);
  return load_encoder(outcome.final_checkpoint);
}

int cmd_pretrain_perceptual(const GlobalFlags& g) {
  RunConfig cfg = load_config_with_overrides(g);
  auto data = build_dataset(cfg.dataset);
  TrainConfig pcfg = cfg.train;
  pcfg.config_echo = cfg.echo();
  auto outcome = pretrain_perceptual(data, pcfg);
  std::cout << "encoder checkpoint: " << outcome.final_checkpoint << "\n";
  if (!outcome.validations.empty())
    std::cout << "final validation mse: " << outcome.validations.back().mse << "\n";
  return kExitOk;
}

int cmd_train(const GlobalFlags& g, const std::string& resume_from, bool is_finetune) {
  RunConfig cfg = load_config_with_overrides(g);
  auto data = build_dataset(cfg.dataset);
  cfg.train.config_echo = cfg.echo();

  PerceptualEncoder<float> encoder(0);
  TrainDeps deps;
  if (variant_uses_perceptual(cfg.train.loss.variant)) {
    encoder = obtain_encoder(
        cfg, data, variant_uses_natural_encoder(cfg.train.loss.variant) ? "vgg" : "domain");
    for (auto& [name, t] : encoder.params()) t.set_requires_grad(false);
    deps.encoder = &encoder;
  }

  TrainOutcome outcome =
      is_finetune ? finetune(resume_from, data, cfg.train, cfg.gen, cfg.critic, deps)
                  : train(data, cfg.train, cfg.gen, cfg.critic, deps, resume_from, false);
  std::cout << "final checkpoint: " << outcome.final_checkpoint << "\n";
  if (!outcome.validations.empty()) {
    const auto& v = outcome.validations.back();
    std::cout << "validation psnr_db " << v.psnr_db << " ssim " << v.ssim
              << " (bicubic baseline psnr_db " << v.bicubic_psnr_db << ")\n";
  }
  return kExitOk;
}

int cmd_eval(const std::string& sr_dir, const std::string& hr_dir, const GlobalFlags& g,
             bool jsonl, const std::string& out_file) {
  SsimConfig scfg;
  if (!g.config_path.empty()) scfg = load_run_config(g.config_path).metrics;
  auto table = evaluate_folder(sr_dir, hr_dir, scfg);
  std::ostringstream os;
  if (jsonl)
    write_metric_table_jsonl(os, table);
  else
    write_metric_table_tsv(os, table);
  if (out_file.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out_file);
    f << os.str();
    std::cout << "wrote metric table -> " << out_file << "\n";
  }
  return kExitOk;
}

int cmd_report(const GlobalFlags& g, const std::string& rho_sweep, const std::string& out_file) {
  RunConfig cfg = load_config_with_overrides(g);
  auto data = build_dataset(cfg.dataset);
  cfg.train.config_echo = cfg.echo();

  PerceptualEncoder<float> domain = obtain_encoder(cfg, data, "domain");
  for (auto& [name, t] : domain.params()) t.set_requires_grad(false);
  PerceptualEncoder<float> natural(0);
  bool separate_natural = !cfg.vgg_encoder_checkpoint.empty();
  if (separate_natural) {
    natural = load_encoder(cfg.vgg_encoder_checkpoint);
    for (auto& [name, t] : natural.params()) t.set_requires_grad(false);
  }
  MatrixDeps deps;
  deps.domain_encoder = &domain;
  deps.natural_encoder = separate_natural ? &natural : &domain;

  std::vector<ExperimentSpec> specs;
  if (rho_sweep.empty()) {
    specs = make_table1_specs(cfg.gen, cfg.critic, cfg.train.loss, cfg.train);
  } else {
    std::vector<int> rhos;
    std::istringstream is(rho_sweep);
    std::string tok;
    while (std::getline(is, tok, ',')) rhos.push_back(std::stoi(tok));
    if (rhos.empty()) throw ConfigError("empty rho sweep");
    specs = make_rho_sweep_specs(cfg.gen, cfg.critic, cfg.train.loss, cfg.train, rhos);
  }
  auto rows = run_experiment_matrix(specs, data, deps);
  std::ostringstream os;
  write_experiment_report(os, rows, cfg.echo());
  if (out_file.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out_file);
    f << os.str();
    std::cout << "wrote experiment report -> " << out_file << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavelet-domain super-resolution toolkit"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "run configuration file")->envname("WAVESR_CONFIG");
  app.add_option("--seed", g.seed, "override the run seed");
  app.add_option("--out", g.out, "override the output path");
  app.add_option("--mode", g.mode, "pipeline mode: pre_interpolated or progressive");
  app.add_option("--scale", g.scale, "upscaling factor: 2 or 4");

  std::string input, out_dir, out_file, checkpoint, reference, sr_dir, hr_dir, stem, rho_sweep;
  bool raw = false, jsonl = false;

  auto* dec = app.add_subcommand("decompose", "split an image into Haar subband files");
  dec->add_option("input", input, "even-dimension raster")->required();
  dec->add_option("--out", out_dir, "output directory")->required();
  dec->add_flag("--raw", raw, "also write exact float32 sidecars");

  auto* rec = app.add_subcommand("reconstruct", "rebuild the image from subband files");
  rec->add_option("dir", sr_dir, "directory holding subbands + manifest")->required();
  rec->add_option("--stem", stem, "stem when several manifests share the directory");
  rec->add_option("--out", out_file, "output image path");

  auto* sr = app.add_subcommand("sr", "super-resolve one image with a trained generator");
  sr->add_option("input", input, "low-resolution raster")->required();
  sr->add_option("--checkpoint", checkpoint, "generator checkpoint directory")->required();
  sr->add_option("--out", out_file, "output image path");
  sr->add_option("--reference", reference, "ground-truth image; prints psnr/ssim");

  auto* pre = app.add_subcommand("pretrain-perceptual", "autoencoder-pretrain the encoder");
  auto* tr = app.add_subcommand("train", "train a model per the run configuration");
  tr->add_option("--resume", checkpoint, "checkpoint directory to continue from");
  auto* ft = app.add_subcommand("finetune", "warm-start from a checkpoint on a new corpus");
  ft->add_option("--checkpoint", checkpoint, "source checkpoint directory")->required();

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM table over paired folders");
  ev->add_option("--sr", sr_dir, "folder of reconstructed images")->required();
  ev->add_option("--hr", hr_dir, "folder of ground-truth images")->required();
  ev->add_flag("--jsonl", jsonl, "line-delimited records instead of TSV");
  ev->add_option("--table-out", out_file, "write the table to a file");

  auto* rep = app.add_subcommand("report", "experiment-matrix comparison table");
  rep->add_option("--rho-sweep", rho_sweep, "comma-separated attention-block counts");
  rep->add_option("--table-out", out_file, "write the report to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (dec->parsed()) return cmd_decompose(input, out_dir, raw);
    if (rec->parsed()) return cmd_reconstruct(sr_dir, stem, out_file);
    if (sr->parsed()) return cmd_sr(input, checkpoint, out_file, reference, g);
    if (pre->parsed()) return cmd_pretrain_perceptual(g);
    if (tr->parsed()) return cmd_train(g, checkpoint, false);
    if (ft->parsed()) return cmd_train(g, checkpoint, true);
    if (ev->parsed()) return cmd_eval(sr_dir, hr_dir, g, jsonl, out_file);
    if (rep->parsed()) return cmd_report(g, rho_sweep, out_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Diverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}
