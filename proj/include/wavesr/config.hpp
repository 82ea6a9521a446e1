#pragma once

// Run configuration: flat UTF-8 text, bracketed section headers, key = value
// lines, '#' comments. Unknown sections or keys are rejected with the
// offending name. Every field has a default; echo() serializes the effective
// configuration for embedding in checkpoints and reports.

#include <string>

#include "wavesr/data.hpp"
#include "wavesr/metrics.hpp"
#include "wavesr/trainer.hpp"

namespace wavesr {

struct RunConfig {
  DatasetSpec dataset;
  GeneratorConfig gen;
  CriticConfig critic;
  TrainConfig train;
  SsimConfig metrics;
  std::string encoder_checkpoint;      // pretrained domain encoder, optional
  std::string vgg_encoder_checkpoint;  // natural-image-pretrained stand-in, optional
  int pretrain_epochs = 3;             // auto-pretraining schedule when none given
  bool dataset_seed_explicit = false;

  std::string echo() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// cross-field checks plus the dataset mirrors of model geometry; call again
// after command-line overrides
void finalize_run_config(RunConfig& cfg);

}  // namespace wavesr
