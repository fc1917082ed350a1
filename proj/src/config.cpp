#include "cae/config.hpp"

namespace cae {

TrainConfig TrainConfig::yelp_defaults() {
  TrainConfig cfg;
  cfg.hidden = 128;
  cfg.vocab_max_size = 10000;
  return cfg;
}

TrainConfig TrainConfig::yahoo_defaults() {
  TrainConfig cfg;
  cfg.hidden = 300;
  cfg.vocab_max_size = 30000;
  return cfg;
}

void TrainConfig::validate() const {
  if (hidden < 2) throw ConfigError("hidden size must be >= 2, got " + std::to_string(hidden));
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_autoencoder <= 0.0 || lr_generator <= 0.0 || lr_discriminator <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  if (disc_steps_per_gen_step < 1) throw ConfigError("disc_steps_per_gen_step must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (vocab_max_size < 1) throw ConfigError("vocab_max_size must be >= 1");
}

}  // namespace cae
