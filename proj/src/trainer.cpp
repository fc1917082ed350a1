#include "cae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <utility>

namespace cae {

TrainState::TrainState(const TrainConfig& config)
    : opt_autoencoder(Optimizer::Kind::adam, config.lr_autoencoder),
      opt_generator(Optimizer::Kind::adam, config.lr_generator),
      opt_discriminator(Optimizer::Kind::adam, config.lr_discriminator) {}

namespace {

void zero_all_grads(const CaeModel& model) {
  for (Tensor p : model.parameters()) p.zero_grad();
}

void check_finite(double v, const char* what, std::size_t step) {
  if (!std::isfinite(v)) {
    throw TrainingDivergenceError(std::string(what) + " became non-finite", step);
  }
}

// Latents computed with no tape active: plain constants, so the adversarial
// and cycle objectives can never push gradients into the encoders.
std::pair<Tensor, Tensor> frozen_latents(const CaeModel& model, const Batch& batch1,
                                         const Batch& batch2) {
  return {encode(model.ae1, batch1), encode(model.ae2, batch2)};
}

std::vector<std::vector<double>> snapshot_values(const CaeModel& model) {
  std::vector<std::vector<double>> out;
  for (const Tensor& p : model.parameters()) {
    out.emplace_back(p.values().begin(), p.values().end());
  }
  return out;
}

void restore_values(CaeModel& model, const std::vector<std::vector<double>>& snap) {
  std::vector<Tensor> params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].mutable_values().begin());
  }
}

}  // namespace

DiscriminatorPhaseResult discriminator_phase(CaeModel& model, const Batch& batch1,
                                             const Batch& batch2, const TrainConfig& config,
                                             TrainState& state) {
  DiscriminatorPhaseResult out;
  for (std::size_t k = 0; k < config.disc_steps_per_gen_step; ++k) {
    zero_all_grads(model);
    auto [z1, z2] = frozen_latents(model, batch1, batch2);
    Tape tape;
    {
      TapeScope scope(tape);
      AdversarialLosses adv = adversarial_losses(model, z1, z2);
      out.disc_1 = adv.disc_1.scalar_value();
      out.disc_2 = adv.disc_2.scalar_value();
      check_finite(out.disc_1 + out.disc_2, "discriminator loss", state.step);
      backward(add(adv.disc_1, adv.disc_2), tape);
    }
    state.opt_discriminator.step(model.discriminator_parameters());
  }
  return out;
}

double autoencoder_phase(CaeModel& model, const Batch& batch1, const Batch& batch2,
                         const TrainConfig& config, TrainState& state) {
  zero_all_grads(model);
  double value = 0.0;
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor recon = reconstruction_loss(model, batch1, batch2);
    value = recon.scalar_value();
    check_finite(value, "reconstruction loss", state.step);
    backward(scale(recon, config.lambda1), tape);
  }
  state.opt_autoencoder.step(model.autoencoder_parameters());
  return value;
}

TransferPhaseResult transfer_phase(CaeModel& model, const Batch& batch1, const Batch& batch2,
                                   const TrainConfig& config, TrainState& state) {
  TransferPhaseResult out;
  const bool use_adv = !config.no_discriminators;
  const bool use_cycle = !config.no_cycle;
  if (!use_adv && !use_cycle) return out;  // both objectives ablated away

  zero_all_grads(model);
  auto [z1, z2] = frozen_latents(model, batch1, batch2);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss;
    if (use_adv) {
      AdversarialLosses adv = adversarial_losses(model, z1, z2);
      out.gen_12 = adv.gen_12.scalar_value();
      out.gen_21 = adv.gen_21.scalar_value();
      loss = scale(add(adv.gen_12, adv.gen_21), config.lambda2);
    }
    if (use_cycle) {
      Tensor cyc = cycle_loss(model, z1, z2);
      out.cycle = cyc.scalar_value();
      Tensor weighted = scale(cyc, config.lambda3);
      loss = loss.defined() ? add(loss, weighted) : weighted;
    }
    check_finite(out.gen_12 + out.gen_21 + out.cycle, "transfer loss", state.step);
    backward(loss, tape);
  }
  state.opt_generator.step(model.transfer_parameters());
  return out;
}

LossBreakdown train_step(CaeModel& model, const Batch& batch1, const Batch& batch2,
                         const TrainConfig& config, TrainState& state) {
  LossBreakdown parts;
  if (!config.no_discriminators) {
    DiscriminatorPhaseResult d = discriminator_phase(model, batch1, batch2, config, state);
    parts.disc_1 = d.disc_1;
    parts.disc_2 = d.disc_2;
  }
  parts.recon = autoencoder_phase(model, batch1, batch2, config, state);
  TransferPhaseResult tp = transfer_phase(model, batch1, batch2, config, state);
  parts.gen_adv_12 = tp.gen_12;
  parts.gen_adv_21 = tp.gen_21;
  parts.cycle = tp.cycle;

  const double l2 = config.no_discriminators ? 0.0 : config.lambda2;
  const double l3 = config.no_cycle ? 0.0 : config.lambda3;
  LossBreakdown breakdown;
  try {
    breakdown = total_loss(parts, config.lambda1, l2, l3);
  } catch (const TrainingDivergenceError& e) {
    throw TrainingDivergenceError(e.what(), state.step);
  }
  state.step += 1;
  return breakdown;
}

double validation_reconstruction(const CaeModel& model, const Corpus& valid1,
                                 const Corpus& valid2, const TrainConfig& config) {
  double total = 0.0;
  for (const auto& [corpus, ae] :
       {std::pair<const Corpus*, const StyleAutoencoder*>{&valid1, &model.ae1},
        std::pair<const Corpus*, const StyleAutoencoder*>{&valid2, &model.ae2}}) {
    if (corpus->sentences.empty()) {
      throw DegenerateInputError("validation corpus is empty");
    }
    double nll = 0.0, tokens = 0.0;
    for (const Batch& batch : make_batches(*corpus, config.batch_size, config.max_len, 0)) {
      Tensor z = encode(*ae, batch);
      Tensor logits = decode_teacher_forced(*ae, z, batch);
      const std::size_t W = batch.max_len + 1;
      Tensor flat = reshape(logits, {batch.batch_size * W, ae->vocab});
      Tensor ce = softmax_cross_entropy(flat, batch.decoder_targets, batch.target_weights);
      double batch_tokens = 0.0;
      for (double w : batch.target_weights) batch_tokens += w;
      nll += ce.scalar_value() * batch_tokens;
      tokens += batch_tokens;
    }
    total += nll / tokens;
  }
  return total;
}

TrainResult train(const Corpus& train1, const Corpus& train2, const Corpus& valid1,
                  const Corpus& valid2, const Vocabulary& vocab, const TrainConfig& config) {
  config.validate();
  if (train1.sentences.empty() || train2.sentences.empty()) {
    throw DegenerateInputError("training corpus is empty");
  }
  if (valid1.sentences.empty() || valid2.sentences.empty()) {
    throw DegenerateInputError("validation corpus is empty");
  }
  if (train1.style_label != StyleLabel::s1 || train2.style_label != StyleLabel::s2) {
    throw ContractError("train: corpora must arrive in style order (s1, s2)");
  }

  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.checkpoint_dir, ec);
    if (ec) {
      throw IoError("cannot create checkpoint directory " + config.checkpoint_dir + ": " +
                    ec.message());
    }
  }

  TrainResult result{init_model(config, vocab.size(), config.seed), TrainLog{}};
  CaeModel& model = result.model;
  TrainLog& log = result.log;
  TrainState state(config);

  // One derived stream drives every shuffle, so the whole run is a pure
  // function of (seed, config, corpora).
  std::uint64_t shuffle_state = config.seed ^ 0x5851f42d4c957f2dULL;

  // During warmup only the autoencoder phase runs; the reused ablation
  // switches skip the discriminator and transfer phases.
  TrainConfig warmup_config = config;
  warmup_config.no_discriminators = true;
  warmup_config.no_cycle = true;

  std::vector<std::vector<double>> best_values;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainConfig& step_config = epoch < config.warmup_epochs ? warmup_config : config;
    std::vector<Batch> batches1 =
        make_batches(train1, config.batch_size, config.max_len, splitmix64(shuffle_state));
    std::vector<Batch> batches2 =
        make_batches(train2, config.batch_size, config.max_len, splitmix64(shuffle_state));
    const std::size_t pairs = std::max(batches1.size(), batches2.size());
    std::size_t i1 = 0, i2 = 0;
    for (std::size_t p = 0; p < pairs; ++p) {
      if (i1 == batches1.size()) {  // recycle the shorter stream
        batches1 = make_batches(train1, config.batch_size, config.max_len,
                                splitmix64(shuffle_state));
        i1 = 0;
      }
      if (i2 == batches2.size()) {
        batches2 = make_batches(train2, config.batch_size, config.max_len,
                                splitmix64(shuffle_state));
        i2 = 0;
      }
      LossBreakdown bd = train_step(model, batches1[i1], batches2[i2], step_config, state);
      log.steps.push_back(StepRecord{state.step - 1, bd});
      ++i1;
      ++i2;
    }

    const double val = validation_reconstruction(model, valid1, valid2, config);
    log.validation_recon.push_back(val);
    if (val < log.best_validation_recon) {
      log.best_validation_recon = val;
      log.best_epoch = epoch;
      best_values = snapshot_values(model);
      if (!config.checkpoint_dir.empty()) {
        save_checkpoint(model, vocab, config.checkpoint_dir + "/best.ckpt");
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    log.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }

  if (!best_values.empty()) restore_values(model, best_values);
  return result;
}

std::string metrics_line(const StepRecord& record) {
  const LossBreakdown& b = record.losses;
  char buf[640];
  std::snprintf(buf, sizeof buf,
                "step=%zu recon=%.17g gen_adv_12=%.17g gen_adv_21=%.17g disc_1=%.17g "
                "disc_2=%.17g cycle=%.17g total=%.17g lambda1=%.17g lambda2=%.17g "
                "lambda3=%.17g",
                record.step, b.recon, b.gen_adv_12, b.gen_adv_21, b.disc_1, b.disc_2, b.cycle,
                b.total, b.lambda1, b.lambda2, b.lambda3);
  return buf;
}

}  // namespace cae
