#include "wavesr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavesr/metrics.hpp"
#include "wavesr/pipeline.hpp"

namespace fs = std::filesystem;

namespace wavesr {

// --- Adam ---------------------------------------------------------------------

void AdamState::ensure(const ParamSet<float>& params) {
  for (const auto& [name, t] : params) {
    if (!m_.count(name)) {
      m_[name].assign(t.numel(), 0.f);
      v_[name].assign(t.numel(), 0.f);
    }
  }
}

void AdamState::export_tensors(const ParamSet<float>& params, CheckpointData& out,
                               const std::string& prefix) const {
  for (const auto& [name, t] : params) {
    auto mi = m_.find(name), vi = v_.find(name);
    if (mi == m_.end() || vi == v_.end()) continue;
    out.tensors[prefix + name + ".m"] = {t.shape(), mi->second};
    out.tensors[prefix + name + ".v"] = {t.shape(), vi->second};
  }
}

void AdamState::import_tensors(const ParamSet<float>& params, const CheckpointData& in,
                               const std::string& prefix) {
  for (const auto& [name, t] : params) {
    auto mi = in.tensors.find(prefix + name + ".m");
    auto vi = in.tensors.find(prefix + name + ".v");
    if (mi == in.tensors.end() || vi == in.tensors.end())
      throw ArchitectureMismatch("optimizer state missing for " + name);
    if (mi->second.values.size() != t.numel())
      throw ArchitectureMismatch("optimizer state shape mismatch for " + name);
    m_[name] = mi->second.values;
    v_[name] = vi->second.values;
  }
}

void adam_step(ParamSet<float>& params, AdamState& state, const AdamConfig& hyper,
               double lr_scale) {
  state.ensure(params);
  state.t += 1;
  const double lr = hyper.lr * lr_scale;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (!p.grad().defined()) throw MissingGrad("no gradient for parameter " + name);
    const auto& g = p.grad().values();
    auto& m = state.m(name);
    auto& v = state.v(name);
    auto& w = p.values_mut();
    for (std::size_t i = 0; i < w.size(); ++i) {
      double gi = g[i];
      double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
      double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

// --- prepared examples ----------------------------------------------------------

namespace {

struct PreparedExample {
  std::vector<float> input_sb;   // 4 x ih x iw
  std::vector<float> target_sb;  // 4 x th x tw
  std::vector<float> hr_img;     // 1 x H x W
};

struct PreparedSet {
  std::vector<PreparedExample> ex;
  int ih = 0, iw = 0, th = 0, tw = 0, hr_h = 0, hr_w = 0;
};

std::vector<float> flat_subbands(const SubbandSet& sb) {
  std::vector<float> v;
  v.reserve(sb.ll.size() * 4);
  v.insert(v.end(), sb.ll.begin(), sb.ll.end());
  v.insert(v.end(), sb.lh.begin(), sb.lh.end());
  v.insert(v.end(), sb.hl.begin(), sb.hl.end());
  v.insert(v.end(), sb.hh.begin(), sb.hh.end());
  return v;
}

PreparedSet prepare(const std::vector<PatchPair>& pairs) {
  PreparedSet out;
  for (const auto& p : pairs) {
    auto in_sb = dwt2_haar(p.lr);
    auto tg_sb = dwt2_haar(p.hr);
    if (out.ex.empty()) {
      out.ih = in_sb.height;
      out.iw = in_sb.width;
      out.th = tg_sb.height;
      out.tw = tg_sb.width;
      out.hr_h = p.hr.height;
      out.hr_w = p.hr.width;
    }
    PreparedExample e;
    e.input_sb = flat_subbands(in_sb);
    e.target_sb = flat_subbands(tg_sb);
    e.hr_img = p.hr.pixels;
    out.ex.push_back(std::move(e));
  }
  return out;
}

std::vector<int> batch_indices(std::uint64_t seed, const char* tag, std::uint64_t step, int batch,
                               int n) {
  Rng rng = Rng::derive(seed, tag, step);
  std::vector<int> idx(batch);
  for (auto& i : idx) i = rng.uniform_int(0, n - 1);
  return idx;
}

Tensor<float> gather(const PreparedSet& set, const std::vector<int>& idx,
                     const std::vector<float> PreparedExample::* field, int c, int h, int w) {
  std::size_t per = static_cast<std::size_t>(c) * h * w;
  std::vector<float> v(idx.size() * per);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& src = set.ex[idx[b]].*field;
    std::copy(src.begin(), src.end(), v.begin() + b * per);
  }
  return Tensor<float>::from_values(Shape{static_cast<int>(idx.size()), c, h, w}, std::move(v));
}

double lr_scale_for_epoch(const TrainConfig& cfg, int epoch) {
  if (cfg.lr_decay_every_epochs <= 0) return 1.0;
  return std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every_epochs);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void manifest_put_generator(CheckpointData& ck, const GeneratorConfig& g) {
  ck.fields["gen.base_width"] = std::to_string(g.base_width);
  ck.fields["gen.rho"] = std::to_string(g.rho);
  ck.fields["gen.k"] = std::to_string(g.k);
  ck.fields["gen.mode"] = to_string(g.mode);
  ck.fields["gen.scale"] = std::to_string(g.scale);
  ck.fields["gen.attention"] = g.attention ? "1" : "0";
}

void manifest_put_critic(CheckpointData& ck, const CriticConfig& c) {
  ck.fields["critic.present"] = "1";
  ck.fields["critic.base_width"] = std::to_string(c.base_width);
  ck.fields["critic.n_stages"] = std::to_string(c.n_stages);
  ck.fields["critic.attention_stage"] = std::to_string(c.attention_stage);
  ck.fields["critic.in_channels"] = std::to_string(c.in_channels);
  ck.fields["critic.k"] = std::to_string(c.k);
}

void manifest_put_train(CheckpointData& ck, const TrainConfig& t) {
  ck.fields["loss.variant"] = to_string(t.loss.variant);
  ck.fields["loss.beta"] = fmt(t.loss.beta);
  ck.fields["loss.lambda_gp"] = fmt(t.loss.lambda_gp);
  ck.fields["loss.critic_steps"] = std::to_string(t.loss.critic_steps);
  ck.fields["train.lr"] = fmt(t.adam.lr);
  ck.fields["train.beta1"] = fmt(t.adam.beta1);
  ck.fields["train.beta2"] = fmt(t.adam.beta2);
  ck.fields["train.eps"] = fmt(t.adam.eps);
  ck.fields["train.epochs"] = std::to_string(t.epochs);
  ck.fields["train.batch"] = std::to_string(t.batch);
  ck.fields["train.seed"] = std::to_string(t.seed);
  ck.fields["train.lr_decay"] = fmt(t.lr_decay);
  ck.fields["train.lr_decay_every_epochs"] = std::to_string(t.lr_decay_every_epochs);
  ck.fields["train.max_generator_steps"] = std::to_string(t.max_generator_steps);
}

int field_int(const CheckpointData& ck, const std::string& key) {
  auto it = ck.fields.find(key);
  if (it == ck.fields.end()) throw ArchitectureMismatch("manifest lacks " + key);
  return std::stoi(it->second);
}

std::string field_str(const CheckpointData& ck, const std::string& key) {
  auto it = ck.fields.find(key);
  if (it == ck.fields.end()) throw ArchitectureMismatch("manifest lacks " + key);
  return it->second;
}

void write_config_echo(const std::string& dir, const std::string& echo) {
  if (echo.empty()) return;
  std::ofstream out(fs::path(dir) / "effective_config.cfg");
  out << echo;
}

}  // namespace

GeneratorConfig generator_config_from_manifest(const CheckpointData& data) {
  GeneratorConfig g;
  g.base_width = field_int(data, "gen.base_width");
  g.rho = field_int(data, "gen.rho");
  g.k = field_int(data, "gen.k");
  g.mode = pipeline_mode_from(field_str(data, "gen.mode"));
  g.scale = field_int(data, "gen.scale");
  g.attention = field_int(data, "gen.attention") != 0;
  return g;
}

void load_params_into(ParamSet<float>& params, const CheckpointData& data,
                      const std::string& prefix) {
  for (auto& [name, t] : params) {
    auto it = data.tensors.find(prefix + name);
    if (it == data.tensors.end())
      throw ArchitectureMismatch("checkpoint lacks tensor " + prefix + name);
    if (!(it->second.shape == t.shape()))
      throw ArchitectureMismatch("tensor " + prefix + name + " is " + it->second.shape.str() +
                                 ", model expects " + t.shape().str());
    t.values_mut() = it->second.values;
  }
}

std::unique_ptr<Generator<float>> load_generator(const std::string& checkpoint_dir) {
  CheckpointData data = load_checkpoint(checkpoint_dir);
  GeneratorConfig cfg = generator_config_from_manifest(data);
  std::uint64_t seed = 0;
  if (data.fields.count("train.seed")) seed = std::stoull(data.fields.at("train.seed"));
  auto gen = std::make_unique<Generator<float>>(cfg, seed);
  load_params_into(gen->params(), data, "gen.");
  return gen;
}

PerceptualEncoder<float> load_encoder(const std::string& checkpoint_dir) {
  CheckpointData data = load_checkpoint(checkpoint_dir);
  if (!data.fields.count("arch") || data.fields.at("arch") != "perceptual_encoder")
    throw ArchitectureMismatch(checkpoint_dir + " is not a perceptual encoder checkpoint");
  PerceptualEncoder<float> enc(0);
  load_params_into(enc.params(), data, "enc.");
  return enc;
}

// --- perceptual pretraining ------------------------------------------------------

TrainOutcome pretrain_perceptual(const Dataset& data, const TrainConfig& cfg) {
  if (data.train.empty()) throw EmptyDataset("no training patches");
  PreparedSet tr = prepare(data.train);
  PreparedSet va = prepare(data.val);

  PerceptualEncoder<float> enc(cfg.seed);
  PerceptualDecoder<float> dec(cfg.seed, cfg.pretrain_linear_decoder);
  AdamState enc_opt, dec_opt;

  int n = static_cast<int>(tr.ex.size());
  long steps_per_epoch = std::max(1, (n + cfg.batch - 1) / cfg.batch);
  long total = steps_per_epoch * cfg.epochs;
  if (cfg.max_generator_steps >= 0) total = std::min(total, cfg.max_generator_steps);

  TrainOutcome outcome;
  fs::create_directories(cfg.out_dir);
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl");
  std::vector<double> val_history;
  auto t_start = std::chrono::steady_clock::now();

  auto validate = [&]() {
    NoGradGuard ng;
    if (va.ex.empty()) return 0.0;
    double total_mse = 0;
    for (std::size_t i = 0; i < va.ex.size(); ++i) {
      auto x = gather(va, {static_cast<int>(i)}, &PreparedExample::hr_img, 1, va.hr_h, va.hr_w);
      auto recon = dec.forward(enc.forward(x));
      total_mse += mse_loss(recon, x).item();
    }
    return total_mse / static_cast<double>(va.ex.size());
  };

  for (long step = 0; step < total; ++step) {
    int epoch = static_cast<int>(step / steps_per_epoch);
    double scale = lr_scale_for_epoch(cfg, epoch);
    auto idx = batch_indices(cfg.seed, "ae_batch", step, cfg.batch, n);
    auto x = gather(tr, idx, &PreparedExample::hr_img, 1, tr.hr_h, tr.hr_w);
    // denoising objective: corrupt the input, reconstruct the clean patch;
    // keeps the learned features sensitive to small pixel perturbations
    Tensor<float> input = x;
    if (cfg.pretrain_noise > 0) {
      Rng noise = Rng::derive(cfg.seed, "ae_noise", step);
      auto v = x.values();
      for (auto& p : v)
        p += static_cast<float>(noise.normal() * cfg.pretrain_noise);
      input = Tensor<float>::from_values(x.shape(), std::move(v));
    }
    auto recon = dec.forward(enc.forward(input));
    auto loss = mse_loss(recon, x);
    double lval = loss.item();
    if (!std::isfinite(lval)) throw Diverged("autoencoder loss is not finite at step " +
                                             std::to_string(step));
    enc.params().zero_grad();
    dec.params().zero_grad();
    loss.backward();
    adam_step(enc.params(), enc_opt, cfg.adam, scale);
    adam_step(dec.params(), dec_opt, cfg.adam, scale);

    StepLog sl;
    sl.step = step;
    sl.epoch = epoch;
    sl.gen_total = lval;
    sl.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    outcome.logs.push_back(sl);
    log << nlohmann::json{{"step", step}, {"epoch", epoch}, {"mse", lval},
                          {"wall_seconds", sl.wall_seconds}}.dump()
        << "\n";

    bool epoch_end = (step + 1) % steps_per_epoch == 0 || step + 1 == total;
    if (epoch_end) {
      double mse = validate();
      val_history.push_back(mse);
      ValidationPoint vp;
      vp.epoch = epoch;
      vp.mse = mse;
      outcome.validations.push_back(vp);
      std::size_t k = val_history.size();
      if (k >= 3 && val_history[k - 1] > val_history[k - 2] &&
          val_history[k - 2] > val_history[k - 3]) {
        break;  // early stop: validation MSE rose twice in a row
      }
    }
    outcome.steps = step + 1;
  }

  CheckpointData ck;
  ck.fields["arch"] = "perceptual_encoder";
  ck.fields["train.seed"] = std::to_string(cfg.seed);
  {
    std::ostringstream hist;
    for (double v : val_history) hist << v << " ";
    ck.fields["val_mse_history"] = hist.str();
  }
  for (const auto& [name, t] : enc.params()) ck.tensors["enc." + name] = {t.shape(), t.values()};
  std::string dir = (fs::path(cfg.out_dir) / "final").string();
  save_checkpoint(dir, ck);
  write_config_echo(dir, cfg.config_echo);
  outcome.final_checkpoint = dir;
  return outcome;
}

// --- adversarial / reconstruction training ----------------------------------------

namespace {

struct TrainerCore {
  TrainerCore(const Dataset& data_, const TrainConfig& cfg_, GeneratorConfig gen_cfg_,
              CriticConfig critic_cfg_, const TrainDeps& deps_)
      : data(data_), cfg(cfg_), gen_cfg(gen_cfg_), critic_cfg(critic_cfg_), deps(deps_) {}

  const Dataset& data;
  const TrainConfig& cfg;
  GeneratorConfig gen_cfg;
  CriticConfig critic_cfg;
  const TrainDeps& deps;

  PreparedSet tr, va;
  std::unique_ptr<Generator<float>> gen;
  std::unique_ptr<Critic<float>> critic;
  AdamState gen_opt, critic_opt;
  long start_step = 0;
  long critic_index = 0;  // global count of critic updates
  std::string parent_id;
  std::string last_checkpoint;

  bool adversarial() const { return variant_uses_adversarial(cfg.loss.variant); }
  bool perceptual() const { return variant_uses_perceptual(cfg.loss.variant); }

  void build() {
    if (data.train.empty()) throw EmptyDataset("no training patches");
    tr = prepare(data.train);
    va = prepare(data.val);
    gen = std::make_unique<Generator<float>>(gen_cfg, cfg.seed);
    if (adversarial()) {
      critic_cfg.in_channels = 4;
      critic = std::make_unique<Critic<float>>(critic_cfg, cfg.seed + 1);
    }
    if (perceptual() && deps.encoder == nullptr)
      throw MissingPerceptualEncoder(std::string(to_string(cfg.loss.variant)) +
                                     " needs a pretrained encoder");
  }

  void verify_arch(const CheckpointData& ck) const {
    GeneratorConfig stored = generator_config_from_manifest(ck);
    if (!(stored == gen_cfg))
      throw ArchitectureMismatch("checkpoint generator (rho=" + std::to_string(stored.rho) +
                                 ", width=" + std::to_string(stored.base_width) +
                                 ") does not match the requested config");
    if (adversarial() && !ck.fields.count("critic.present"))
      throw ArchitectureMismatch("checkpoint has no critic weights, config needs one");
  }

  void load_from(const std::string& dir, bool reset_optimizer) {
    CheckpointData ck = load_checkpoint(dir);
    verify_arch(ck);
    load_params_into(gen->params(), ck, "gen.");
    if (critic && ck.fields.count("critic.present"))
      load_params_into(critic->params(), ck, "critic.");
    if (reset_optimizer) {
      parent_id = ck.fields.count("checkpoint_id") ? ck.fields.at("checkpoint_id") : "";
    } else {
      gen_opt.import_tensors(gen->params(), ck, "opt_gen.");
      gen_opt.t = std::stol(field_str(ck, "progress.adam_t_gen"));
      if (critic) {
        critic_opt.import_tensors(critic->params(), ck, "opt_critic.");
        critic_opt.t = std::stol(field_str(ck, "progress.adam_t_critic"));
      }
      start_step = std::stol(field_str(ck, "progress.step"));
      critic_index = std::stol(field_str(ck, "progress.critic_step"));
      if (ck.fields.count("parent_id")) parent_id = ck.fields.at("parent_id");
    }
  }

  long steps_per_epoch() const {
    return std::max<long>(1, (static_cast<long>(tr.ex.size()) + cfg.batch - 1) / cfg.batch);
  }

  ValidationPoint validate(int epoch) {
    NoGradGuard ng;
    ValidationPoint vp;
    vp.epoch = epoch;
    if (data.val.empty()) return vp;
    SsimConfig scfg;
    if (data.val[0].hr.height < scfg.window || data.val[0].hr.width < scfg.window)
      scfg.mode = SsimConfig::Mode::Global;
    double ps = 0, ss = 0, bs = 0;
    for (const auto& pair : data.val) {
      Image lr_full = pair.mode == PipelineMode::PreInterpolated
                          ? pair.lr
                          : resize_image(pair.lr, pair.hr.height, pair.hr.width,
                                         ResizeMode::Bicubic);
      auto sb = dwt2_haar(pair.lr);
      auto pred = gen->forward(subbands_to_tensor(sb));
      Shape s = pred.shape();
      Image sr = idwt2_haar(tensor_to_subbands(pred, s[2] * 2, s[3] * 2));
      for (auto& p : sr.pixels) p = std::clamp(p, 0.0f, 1.0f);
      ps += psnr(pair.hr, sr);
      ss += ssim(pair.hr, sr, scfg);
      bs += psnr(pair.hr, lr_full);
    }
    vp.psnr_db = ps / data.val.size();
    vp.ssim = ss / data.val.size();
    vp.bicubic_psnr_db = bs / data.val.size();
    return vp;
  }

  std::string save(const std::string& name, long step, int epoch,
                   const std::vector<StepLog>& logs, const TrainOutcome& outcome) {
    CheckpointData ck;
    manifest_put_generator(ck, gen_cfg);
    if (critic) manifest_put_critic(ck, critic_cfg);
    manifest_put_train(ck, cfg);
    ck.fields["progress.step"] = std::to_string(step);
    ck.fields["progress.epoch"] = std::to_string(epoch);
    ck.fields["progress.critic_step"] = std::to_string(critic_index);
    ck.fields["progress.adam_t_gen"] = std::to_string(gen_opt.t);
    if (critic) ck.fields["progress.adam_t_critic"] = std::to_string(critic_opt.t);
    if (!parent_id.empty()) ck.fields["parent_id"] = parent_id;
    {
      double tail = 0;
      std::size_t k = std::min<std::size_t>(logs.size(), 32);
      for (std::size_t i = logs.size() - k; i < logs.size(); ++i) tail += logs[i].gen_total;
      ck.fields["summary.gen_loss_tail_mean"] = k ? fmt(tail / k) : "0";
      if (!outcome.validations.empty()) {
        ck.fields["summary.val_psnr_db"] = fmt(outcome.validations.back().psnr_db);
        ck.fields["summary.val_ssim"] = fmt(outcome.validations.back().ssim);
      }
    }
    for (const auto& [pname, t] : gen->params())
      ck.tensors["gen." + pname] = {t.shape(), t.values()};
    gen_opt.export_tensors(gen->params(), ck, "opt_gen.");
    if (critic) {
      for (const auto& [pname, t] : critic->params())
        ck.tensors["critic." + pname] = {t.shape(), t.values()};
      critic_opt.export_tensors(critic->params(), ck, "opt_critic.");
    }
    std::string dir = (fs::path(cfg.out_dir) / name).string();
    save_checkpoint(dir, ck);
    write_config_echo(dir, cfg.config_echo);
    last_checkpoint = dir;
    return dir;
  }

  TrainOutcome run() {
    TrainOutcome outcome;
    long spe = steps_per_epoch();
    long total = spe * cfg.epochs;
    if (cfg.max_generator_steps >= 0)
      total = std::min(total, start_step + cfg.max_generator_steps);
    fs::create_directories(cfg.out_dir);
    std::ofstream log(fs::path(cfg.out_dir) / "train_log.jsonl",
                      start_step > 0 ? std::ios::app : std::ios::out);
    auto t_start = std::chrono::steady_clock::now();
    int n = static_cast<int>(tr.ex.size());

    auto check_finite = [&](double v, const char* what, long step) {
      if (!std::isfinite(v))
        throw Diverged(std::string(what) + " is not finite at step " + std::to_string(step) +
                       "; last good checkpoint: " +
                       (last_checkpoint.empty() ? "<none written>" : last_checkpoint));
    };

    for (long step = start_step; step < total; ++step) {
      int epoch = static_cast<int>(step / spe);
      double scale = lr_scale_for_epoch(cfg, epoch);
      StepLog sl;
      sl.step = step;
      sl.epoch = epoch;

      if (adversarial()) {
        for (int j = 0; j < cfg.loss.critic_steps; ++j) {
          auto idx = batch_indices(cfg.seed, "critic_batch",
                                   static_cast<std::uint64_t>(critic_index), cfg.batch, n);
          auto input = gather(tr, idx, &PreparedExample::input_sb, 4, tr.ih, tr.iw);
          auto target = gather(tr, idx, &PreparedExample::target_sb, 4, tr.th, tr.tw);
          Tensor<float> fake;
          {
            NoGradGuard ng;
            fake = gen->forward(input);
          }
          Rng eps = Rng::derive(cfg.seed, "gp_eps", static_cast<std::uint64_t>(critic_index));
          auto parts = critic_loss(*critic, target, fake, cfg.loss.lambda_gp, eps);
          double cval = parts.loss.item();
          check_finite(cval, "critic loss", step);
          critic->params().zero_grad();
          parts.loss.backward();
          adam_step(critic->params(), critic_opt, cfg.adam, scale);
          ++critic_index;
          sl.critic_total = cval;
          sl.wasserstein = parts.wasserstein;
          sl.penalty = parts.penalty;
        }
      }

      auto idx = batch_indices(cfg.seed, "gen_batch", static_cast<std::uint64_t>(step), cfg.batch,
                               n);
      auto input = gather(tr, idx, &PreparedExample::input_sb, 4, tr.ih, tr.iw);
      auto fake = gen->forward(input);
      GeneratorLossParts<float> parts;
      if (adversarial()) {
        auto adv = generator_adv_loss(*critic, fake);
        sl.adversarial = adv.item();
        parts.adversarial = adv;
      }
      if (perceptual()) {
        auto sr_img = ops::haar_idwt2_op(fake);
        auto hr = gather(tr, idx, &PreparedExample::hr_img, 1, tr.hr_h, tr.hr_w);
        auto perc = perceptual_loss(*deps.encoder, sr_img, hr);
        sl.perceptual = perc.item();
        parts.perceptual = perc;
      }
      auto loss = total_generator_loss(cfg.loss, parts);
      sl.gen_total = loss.item();
      check_finite(sl.gen_total, "generator loss", step);
      gen->params().zero_grad();
      loss.backward();
      adam_step(gen->params(), gen_opt, cfg.adam, scale);

      sl.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      outcome.logs.push_back(sl);
      log << nlohmann::json{{"step", sl.step},
                            {"epoch", sl.epoch},
                            {"gen_total", sl.gen_total},
                            {"adversarial", sl.adversarial},
                            {"perceptual", sl.perceptual},
                            {"critic_total", sl.critic_total},
                            {"wasserstein_estimate", sl.wasserstein},
                            {"gradient_penalty", sl.penalty},
                            {"wall_seconds", sl.wall_seconds}}
                 .dump()
          << "\n";

      bool epoch_end = (step + 1) % spe == 0;
      if (epoch_end) outcome.validations.push_back(validate(epoch));
      if (epoch_end && cfg.checkpoint_every_epochs > 0 &&
          ((epoch + 1) % cfg.checkpoint_every_epochs == 0) && step + 1 < total)
        save("ckpt_epoch_" + std::to_string(epoch), step + 1, epoch + 1, outcome.logs, outcome);
      outcome.steps = step + 1 - start_step;
    }

    if (outcome.validations.empty() ||
        (total > start_step && total % spe != 0))
      outcome.validations.push_back(validate(static_cast<int>((total > 0 ? total - 1 : 0) / spe)));
    outcome.final_checkpoint =
        save("final", total, static_cast<int>(total / spe), outcome.logs, outcome);
    return outcome;
  }
};

}  // namespace

TrainOutcome train(const Dataset& data, const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                   const CriticConfig& critic_cfg, const TrainDeps& deps,
                   const std::string& initial, bool reset_optimizer) {
  TrainerCore core{data, cfg, gen_cfg, critic_cfg, deps};
  core.build();
  if (!initial.empty()) core.load_from(initial, reset_optimizer);
  return core.run();
}

TrainOutcome finetune(const std::string& checkpoint_dir, const Dataset& data,
                      const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                      const CriticConfig& critic_cfg, const TrainDeps& deps) {
  return train(data, cfg, gen_cfg, critic_cfg, deps, checkpoint_dir, /*reset_optimizer=*/true);
}

// --- experiment matrix -------------------------------------------------------------

std::vector<ExperimentRow> run_experiment_matrix(const std::vector<ExperimentSpec>& specs,
                                                 const Dataset& data, const MatrixDeps& deps) {
  if (specs.empty()) throw ConfigError("experiment list is empty");
  std::vector<ExperimentRow> rows;
  for (const auto& spec : specs) {
    ExperimentRow row;
    row.name = spec.name;
    try {
      TrainDeps td;
      if (variant_uses_perceptual(spec.loss.variant))
        td.encoder = variant_uses_natural_encoder(spec.loss.variant) ? deps.natural_encoder
                                                                     : deps.domain_encoder;
      TrainConfig tcfg = spec.train;
      tcfg.loss = spec.loss;
      tcfg.out_dir = spec.train.out_dir + "/" + spec.name;
      auto outcome = train(data, tcfg, spec.gen, spec.critic, td);
      row.ok = true;
      row.steps = outcome.steps;
      if (!outcome.logs.empty()) {
        row.final_gen_loss = outcome.logs.back().gen_total;
        row.wasserstein = outcome.logs.back().wasserstein;
      }
      if (!outcome.validations.empty()) {
        row.val_psnr = outcome.validations.back().psnr_db;
        row.val_ssim = outcome.validations.back().ssim;
      }
      Generator<float> probe(spec.gen, spec.train.seed);
      int grid_h = data.train.empty() ? 16 : data.train[0].lr.height / 2;
      int grid_w = data.train.empty() ? 16 : data.train[0].lr.width / 2;
      auto rep = complexity_report(probe, grid_h, grid_w);
      row.parameter_count = rep.parameter_count;
      row.memory_bytes = rep.memory_bytes_f32;
      row.flops = rep.flops_estimate;
      row.inference_seconds = rep.inference_seconds;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ExperimentSpec> make_table1_specs(const GeneratorConfig& gen,
                                              const CriticConfig& critic, const LossConfig& loss,
                                              const TrainConfig& train) {
  std::vector<ExperimentSpec> specs;
  for (LossVariant v : {LossVariant::CnnVgg, LossVariant::Wgan, LossVariant::Perceptual,
                        LossVariant::WganVgg, LossVariant::WganMaP}) {
    ExperimentSpec s;
    s.name = to_string(v);
    s.gen = gen;
    s.gen.attention = variant_uses_attention_generator(v);
    s.critic = critic;
    s.loss = loss;
    s.loss.variant = v;
    s.train = train;
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<ExperimentSpec> make_rho_sweep_specs(const GeneratorConfig& gen,
                                                 const CriticConfig& critic,
                                                 const LossConfig& loss, const TrainConfig& train,
                                                 const std::vector<int>& rhos) {
  std::vector<ExperimentSpec> specs;
  for (int rho : rhos) {
    ExperimentSpec s;
    s.name = "rho" + std::to_string(rho);
    s.gen = gen;
    s.gen.rho = rho;
    s.critic = critic;
    s.loss = loss;
    s.train = train;
    specs.push_back(std::move(s));
  }
  return specs;
}

void write_experiment_report(std::ostream& os, const std::vector<ExperimentRow>& rows,
                             const std::string& config_echo) {
  if (!config_echo.empty()) {
    std::istringstream echo(config_echo);
    std::string line;
    while (std::getline(echo, line)) os << "# " << line << "\n";
  }
  os << "name\tstatus\tsteps\tgen_loss\twasserstein\tval_psnr_db\tval_ssim\tparams\tmemory_mb\t"
        "log10_flops\tinference_s\n";
  for (const auto& r : rows) {
    os << r.name << "\t" << (r.ok ? "ok" : ("failed: " + r.error)) << "\t" << r.steps << "\t"
       << r.final_gen_loss << "\t" << r.wasserstein << "\t" << r.val_psnr << "\t" << r.val_ssim
       << "\t" << r.parameter_count << "\t"
       << static_cast<double>(r.memory_bytes) / (1024.0 * 1024.0) << "\t"
       << (r.flops > 0 ? std::log10(r.flops) : 0.0) << "\t" << r.inference_seconds << "\n";
  }
}

}  // namespace wavesr
