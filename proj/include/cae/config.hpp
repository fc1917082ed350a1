#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "cae/errors.hpp"

namespace cae {

// Everything the training loop needs to know, validated up front. Defaults
// (per-field and the two named presets) are also what the CLI exposes.
struct TrainConfig {
  std::size_t hidden = 128;  // h_n; embedding size is tied to it

  double lambda1 = 0.1;  // reconstruction weight
  double lambda2 = 1.0;  // adversarial (generator) weight
  double lambda3 = 1.0;  // cycle-consistency weight

  std::size_t batch_size = 64;
  std::size_t epochs = 10;

  double lr_autoencoder = 1e-3;
  double lr_generator = 1e-4;
  double lr_discriminator = 1e-4;
  std::size_t disc_steps_per_gen_step = 1;
  // Schedule: autoencoder-only epochs before the adversarial and cycle
  // phases start. Lets the latent geometry form before the transfer nets
  // commit to a mapping.
  std::size_t warmup_epochs = 0;

  std::size_t max_len = 20;
  std::uint64_t seed = 1;

  bool no_cycle = false;           // ablation: drop the cycle term
  bool no_discriminators = false;  // ablation: drop adversarial training

  std::string checkpoint_dir;
  std::size_t vocab_max_size = 10000;

  // Review-corpus sizing: h_n = 128, 10K vocabulary.
  static TrainConfig yelp_defaults();
  // QA-corpus sizing: h_n = 300, 30K vocabulary.
  static TrainConfig yahoo_defaults();

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

}  // namespace cae
