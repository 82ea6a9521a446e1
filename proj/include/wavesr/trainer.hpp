#pragma once

// Optimization loops. All stochastic choices (batch indices, gradient-penalty
// epsilons, weight init) are pure functions of (seed, purpose, index), so a
// run checkpointed at step N and resumed reproduces the uninterrupted run
// bit-exactly.

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavesr/checkpoint.hpp"
#include "wavesr/data.hpp"
#include "wavesr/losses.hpp"
#include "wavesr/networks.hpp"

namespace wavesr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  long t = 0;

  void ensure(const ParamSet<float>& params);
  void reset() {
    t = 0;
    m_.clear();
    v_.clear();
  }
  std::vector<float>& m(const std::string& name) { return m_[name]; }
  std::vector<float>& v(const std::string& name) { return v_[name]; }

  void export_tensors(const ParamSet<float>& params, CheckpointData& out,
                      const std::string& prefix) const;
  void import_tensors(const ParamSet<float>& params, const CheckpointData& in,
                      const std::string& prefix);

 private:
  std::map<std::string, std::vector<float>> m_, v_;
};

// one bias-corrected update; every parameter must carry a gradient
void adam_step(ParamSet<float>& params, AdamState& state, const AdamConfig& hyper,
               double lr_scale = 1.0);

struct TrainConfig {
  AdamConfig adam;
  int epochs = 180;
  int batch = 16;
  LossConfig loss;
  std::uint64_t seed = 0;
  double lr_decay = 0.5;
  int lr_decay_every_epochs = 60;
  int checkpoint_every_epochs = 0;  // 0 = final checkpoint only
  long max_generator_steps = -1;    // >= 0 caps the total step count
  double pretrain_noise = 0.05;     // input-noise stddev for encoder pretraining
  bool pretrain_linear_decoder = true;  // activation-free decoder for pretraining
  std::string out_dir = "run_out";
  std::string config_echo;  // effective run config, copied into checkpoints
};

struct StepLog {
  long step = 0;
  int epoch = 0;
  double gen_total = 0;
  double adversarial = 0;
  double perceptual = 0;
  double critic_total = 0;
  double wasserstein = 0;
  double penalty = 0;
  double wall_seconds = 0;
};

struct ValidationPoint {
  int epoch = 0;
  double psnr_db = 0;
  double ssim = 0;
  double bicubic_psnr_db = 0;
  double mse = 0;  // autoencoder pretraining tracks reconstruction MSE here
};

struct TrainOutcome {
  std::string final_checkpoint;
  std::vector<StepLog> logs;
  std::vector<ValidationPoint> validations;
  long steps = 0;
};

struct TrainDeps {
  const PerceptualEncoder<float>* encoder = nullptr;
};

// autoencoder pretraining of the perceptual encoder; returns an encoder-only
// checkpoint. Stops early if validation MSE rises for three straight
// evaluations.
TrainOutcome pretrain_perceptual(const Dataset& data, const TrainConfig& cfg);

// WGAN/perceptual training per the loss variant. `initial` resumes (or, with
// reset_optimizer, warm-starts) from a checkpoint directory.
TrainOutcome train(const Dataset& data, const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                   const CriticConfig& critic_cfg, const TrainDeps& deps,
                   const std::string& initial = "", bool reset_optimizer = false);

// loads the checkpoint, verifies the architecture against the configs, resets
// optimizer state, records the parent checkpoint id
TrainOutcome finetune(const std::string& checkpoint_dir, const Dataset& data,
                      const TrainConfig& cfg, const GeneratorConfig& gen_cfg,
                      const CriticConfig& critic_cfg, const TrainDeps& deps);

GeneratorConfig generator_config_from_manifest(const CheckpointData& data);
std::unique_ptr<Generator<float>> load_generator(const std::string& checkpoint_dir);
PerceptualEncoder<float> load_encoder(const std::string& checkpoint_dir);
void load_params_into(ParamSet<float>& params, const CheckpointData& data,
                      const std::string& prefix);

struct ExperimentSpec {
  std::string name;
  GeneratorConfig gen;
  CriticConfig critic;
  LossConfig loss;
  TrainConfig train;
};

struct ExperimentRow {
  std::string name;
  bool ok = false;
  std::string error;
  long steps = 0;
  double final_gen_loss = 0;
  double wasserstein = 0;
  double val_psnr = 0;
  double val_ssim = 0;
  std::size_t parameter_count = 0;
  std::size_t memory_bytes = 0;
  double flops = 0;
  double inference_seconds = 0;
};

struct MatrixDeps {
  const PerceptualEncoder<float>* domain_encoder = nullptr;   // Perceptual rows
  const PerceptualEncoder<float>* natural_encoder = nullptr;  // VGG-style rows
};

// trains every spec on the same corpus; per-run failures are recorded in the
// row and the remaining runs continue
std::vector<ExperimentRow> run_experiment_matrix(const std::vector<ExperimentSpec>& specs,
                                                 const Dataset& data, const MatrixDeps& deps);

// the five experiment-table rows; generator attention follows the table
std::vector<ExperimentSpec> make_table1_specs(const GeneratorConfig& gen,
                                              const CriticConfig& critic, const LossConfig& loss,
                                              const TrainConfig& train);
// same variant at several attention-block depths
std::vector<ExperimentSpec> make_rho_sweep_specs(const GeneratorConfig& gen,
                                                 const CriticConfig& critic,
                                                 const LossConfig& loss, const TrainConfig& train,
                                                 const std::vector<int>& rhos);

void write_experiment_report(std::ostream& os, const std::vector<ExperimentRow>& rows,
                             const std::string& config_echo);

}  // namespace wavesr
