#include "wavesr/config.hpp"

#include <fstream>
#include <sstream>

namespace wavesr {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

double parse_num(const std::string& section, const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (...) {
    throw ConfigError("bad numeric value '" + value + "' for " + key + " in [" + section + "]");
  }
}

int parse_int(const std::string& section, const std::string& key, const std::string& value) {
  double v = parse_num(section, key, value);
  if (v != static_cast<int>(v))
    throw ConfigError("expected integer for " + key + " in [" + section + "]");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("expected boolean for " + key + " in [" + section + "]");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header at line " +
                                                std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      if (section != "dataset" && section != "model" && section != "train" &&
          section != "loss" && section != "metrics")
        throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

    auto num = [&] { return parse_num(section, key, value); };
    auto integer = [&] { return parse_int(section, key, value); };
    auto boolean = [&] { return parse_bool(section, key, value); };

    if (section == "dataset") {
      if (key == "root") cfg.dataset.root = value;
      else if (key == "pattern") cfg.dataset.pattern = value;
      else if (key == "train_fraction") cfg.dataset.train_fraction = num();
      else if (key == "patch") cfg.dataset.patch = integer();
      else if (key == "patches_per_image") cfg.dataset.patches_per_image = integer();
      else if (key == "seed") {
        cfg.dataset.seed = static_cast<std::uint64_t>(num());
        cfg.dataset_seed_explicit = true;
      } else throw ConfigError("unknown key '" + key + "' in [dataset]");
    } else if (section == "model") {
      if (key == "base_width") cfg.gen.base_width = integer();
      else if (key == "rho") cfg.gen.rho = integer();
      else if (key == "k") cfg.gen.k = integer();
      else if (key == "attention") cfg.gen.attention = boolean();
      else if (key == "mode") cfg.gen.mode = pipeline_mode_from(value);
      else if (key == "scale") cfg.gen.scale = integer();
      else if (key == "critic_base_width") cfg.critic.base_width = integer();
      else if (key == "critic_stages") cfg.critic.n_stages = integer();
      else if (key == "critic_attention_stage") cfg.critic.attention_stage = integer();
      else if (key == "critic_k") cfg.critic.k = integer();
      else throw ConfigError("unknown key '" + key + "' in [model]");
    } else if (section == "train") {
      if (key == "lr") cfg.train.adam.lr = num();
      else if (key == "beta1") cfg.train.adam.beta1 = num();
      else if (key == "beta2") cfg.train.adam.beta2 = num();
      else if (key == "eps") cfg.train.adam.eps = num();
      else if (key == "epochs") cfg.train.epochs = integer();
      else if (key == "batch") cfg.train.batch = integer();
      else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(num());
      else if (key == "lr_decay") cfg.train.lr_decay = num();
      else if (key == "lr_decay_every") cfg.train.lr_decay_every_epochs = integer();
      else if (key == "checkpoint_every") cfg.train.checkpoint_every_epochs = integer();
      else if (key == "max_steps") cfg.train.max_generator_steps = integer();
      else if (key == "out_dir") cfg.train.out_dir = value;
      else if (key == "encoder") cfg.encoder_checkpoint = value;
      else if (key == "vgg_encoder") cfg.vgg_encoder_checkpoint = value;
      else if (key == "pretrain_epochs") cfg.pretrain_epochs = integer();
      else if (key == "pretrain_noise") cfg.train.pretrain_noise = num();
      else if (key == "pretrain_linear_decoder") cfg.train.pretrain_linear_decoder = boolean();
      else throw ConfigError("unknown key '" + key + "' in [train]");
    } else if (section == "loss") {
      if (key == "variant") cfg.train.loss.variant = loss_variant_from(value);
      else if (key == "beta") cfg.train.loss.beta = num();
      else if (key == "lambda_gp") cfg.train.loss.lambda_gp = num();
      else if (key == "critic_steps") cfg.train.loss.critic_steps = integer();
      else throw ConfigError("unknown key '" + key + "' in [loss]");
    } else if (section == "metrics") {
      if (key == "ssim_mode") {
        if (value == "global") cfg.metrics.mode = SsimConfig::Mode::Global;
        else if (value == "windowed") cfg.metrics.mode = SsimConfig::Mode::Windowed;
        else throw ConfigError("ssim_mode must be 'global' or 'windowed'");
      } else if (key == "window") cfg.metrics.window = integer();
      else if (key == "sigma") cfg.metrics.sigma = num();
      else if (key == "k1") cfg.metrics.k1 = num();
      else if (key == "k2") cfg.metrics.k2 = num();
      else throw ConfigError("unknown key '" + key + "' in [metrics]");
    }
  }

  finalize_run_config(cfg);
  return cfg;
}

void finalize_run_config(RunConfig& cfg) {
  if (cfg.dataset.train_fraction <= 0.0 || cfg.dataset.train_fraction >= 1.0)
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  if (cfg.gen.scale != 2 && cfg.gen.scale != 4) throw ConfigError("scale must be 2 or 4");
  if (cfg.train.batch < 1 || cfg.train.batch > 128)
    throw ConfigError("batch must be between 1 and 128");
  if (cfg.train.adam.lr <= 0) throw ConfigError("lr must be positive");
  if (cfg.train.adam.beta1 <= 0 || cfg.train.adam.beta1 >= 1 || cfg.train.adam.beta2 <= 0 ||
      cfg.train.adam.beta2 >= 1)
    throw ConfigError("beta1/beta2 must lie in (0,1)");
  if (cfg.train.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.dataset.patch % (2 * cfg.gen.scale) != 0)
    throw ConfigError("patch size must be divisible by 2*scale");

  // dataset mirrors the model geometry; its seed defaults to the run seed
  cfg.dataset.scale = cfg.gen.scale;
  cfg.dataset.mode = cfg.gen.mode;
  if (!cfg.dataset_seed_explicit) cfg.dataset.seed = cfg.train.seed;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "[dataset]\n"
     << "root = " << dataset.root << "\n"
     << "pattern = " << dataset.pattern << "\n"
     << "train_fraction = " << dataset.train_fraction << "\n"
     << "patch = " << dataset.patch << "\n"
     << "patches_per_image = " << dataset.patches_per_image << "\n"
     << "seed = " << dataset.seed << "\n";
  os << "[model]\n"
     << "base_width = " << gen.base_width << "\n"
     << "rho = " << gen.rho << "\n"
     << "k = " << gen.k << "\n"
     << "attention = " << (gen.attention ? 1 : 0) << "\n"
     << "mode = " << to_string(gen.mode) << "\n"
     << "scale = " << gen.scale << "\n"
     << "critic_base_width = " << critic.base_width << "\n"
     << "critic_stages = " << critic.n_stages << "\n"
     << "critic_attention_stage = " << critic.attention_stage << "\n"
     << "critic_k = " << critic.k << "\n";
  os << "[train]\n"
     << "lr = " << train.adam.lr << "\n"
     << "beta1 = " << train.adam.beta1 << "\n"
     << "beta2 = " << train.adam.beta2 << "\n"
     << "eps = " << train.adam.eps << "\n"
     << "epochs = " << train.epochs << "\n"
     << "batch = " << train.batch << "\n"
     << "seed = " << train.seed << "\n"
     << "lr_decay = " << train.lr_decay << "\n"
     << "lr_decay_every = " << train.lr_decay_every_epochs << "\n"
     << "checkpoint_every = " << train.checkpoint_every_epochs << "\n"
     << "max_steps = " << train.max_generator_steps << "\n"
     << "out_dir = " << train.out_dir << "\n"
     << "encoder = " << encoder_checkpoint << "\n"
     << "vgg_encoder = " << vgg_encoder_checkpoint << "\n"
     << "pretrain_epochs = " << pretrain_epochs << "\n"
     << "pretrain_noise = " << train.pretrain_noise << "\n"
     << "pretrain_linear_decoder = " << (train.pretrain_linear_decoder ? 1 : 0) << "\n";
  os << "[loss]\n"
     << "variant = " << to_string(train.loss.variant) << "\n"
     << "beta = " << train.loss.beta << "\n"
     << "lambda_gp = " << train.loss.lambda_gp << "\n"
     << "critic_steps = " << train.loss.critic_steps << "\n";
  os << "[metrics]\n"
     << "ssim_mode = " << (metrics.mode == SsimConfig::Mode::Global ? "global" : "windowed")
     << "\n"
     << "window = " << metrics.window << "\n"
     << "sigma = " << metrics.sigma << "\n"
     << "k1 = " << metrics.k1 << "\n"
     << "k2 = " << metrics.k2 << "\n";
  return os.str();
}

}  // namespace wavesr
