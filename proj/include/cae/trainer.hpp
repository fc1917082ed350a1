#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cae/config.hpp"
#include "cae/losses.hpp"
#include "cae/model.hpp"
#include "cae/text_data.hpp"

namespace cae {

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown losses;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<double> validation_recon;  // one entry per epoch
  std::vector<double> epoch_seconds;     // wall clock; never serialized
  std::size_t best_epoch = 0;
  double best_validation_recon = std::numeric_limits<double>::infinity();
};

// Optimizers bound to the three phase parameter groups plus the step counter.
// Adam state lives here, so the same TrainState must persist across steps.
struct TrainState {
  explicit TrainState(const TrainConfig& config);

  Optimizer opt_autoencoder;
  Optimizer opt_generator;
  Optimizer opt_discriminator;
  std::size_t step = 0;
};

// The three alternating update phases. train_step composes them; they are
// exposed so the only-this-group-changes contract can be verified directly.
struct DiscriminatorPhaseResult {
  double disc_1 = 0.0;
  double disc_2 = 0.0;
};
DiscriminatorPhaseResult discriminator_phase(CaeModel& model, const Batch& batch1,
                                             const Batch& batch2, const TrainConfig& config,
                                             TrainState& state);
// Returns the reconstruction loss the update was taken on.
double autoencoder_phase(CaeModel& model, const Batch& batch1, const Batch& batch2,
                         const TrainConfig& config, TrainState& state);
struct TransferPhaseResult {
  double gen_12 = 0.0;
  double gen_21 = 0.0;
  double cycle = 0.0;
};
TransferPhaseResult transfer_phase(CaeModel& model, const Batch& batch1, const Batch& batch2,
                                   const TrainConfig& config, TrainState& state);

// One full alternating step: (a) disc_steps_per_gen_step discriminator
// updates, (b) one autoencoder update on lambda1 * reconstruction, (c) one
// transfer-net update on lambda2 * (gen terms) + lambda3 * cycle. Ablations:
// no_cycle zeroes lambda3, no_discriminators skips (a) and the gen terms.
// Throws TrainingDivergenceError (with the step index) on non-finite losses.
LossBreakdown train_step(CaeModel& model, const Batch& batch1, const Batch& batch2,
                         const TrainConfig& config, TrainState& state);

// Token-weighted validation reconstruction loss (the checkpoint-selection
// metric): per-token NLL per style, summed over the two styles.
double validation_reconstruction(const CaeModel& model, const Corpus& valid1,
                                 const Corpus& valid2, const TrainConfig& config);

struct TrainResult {
  CaeModel model;
  TrainLog log;
};

// Full training loop over paired batch streams; the shorter corpus is
// reshuffled and recycled within each epoch. Keeps the parameters with the
// best validation reconstruction and returns them. Deterministic per
// (seed, config, corpora). If config.checkpoint_dir is set, the best model is
// also written there as "best.ckpt".
TrainResult train(const Corpus& train1, const Corpus& train2, const Corpus& valid1,
                  const Corpus& valid2, const Vocabulary& vocab, const TrainConfig& config);

// ==== persistence ====

// FNV-1a over the token list; checkpoints embed it so a model is never loaded
// against the wrong vocabulary.
std::uint64_t vocabulary_hash(const Vocabulary& vocab);

// Versioned binary container: config echo, vocabulary hash, and every named
// parameter as little-endian doubles. load(save(m)) is bitwise exact.
void save_checkpoint(const CaeModel& model, const Vocabulary& vocab, const std::string& path);
CaeModel load_checkpoint(const std::string& path, const Vocabulary& vocab);

// One metrics line: "step=N recon=... lambda3=..." with full double
// precision; the documented training metrics record format.
std::string metrics_line(const StepRecord& record);

}  // namespace cae
