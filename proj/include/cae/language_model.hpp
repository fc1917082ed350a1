#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cae/model.hpp"

namespace cae {

// ==== recurrent language model (the PPL / RPPL judge) ====

struct LmConfig {
  std::size_t embedding = 300;
  std::size_t hidden = 300;
  double dropout = 0.2;  // applied to embeddings and pre-projection states
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  std::size_t max_len = 20;  // training-time truncation; evaluation never truncates
};

// One-layer LSTM next-token model: embedding -> LSTM -> vocabulary logits.
// Sequences run bos -> tokens -> eos from a zero initial state.
struct LanguageModel {
  Tensor embedding;   // [V x e]
  LstmCell cell;
  Tensor projection;  // [h x V]
  std::size_t vocab = 0;
  LmConfig config;
};

// Adam training with inverted dropout, deterministic per seed. Empty
// sentences are dropped; an empty corpus is a ConfigError.
LanguageModel train_lm(const std::vector<std::vector<int>>& sentences, std::size_t vocab_size,
                       const LmConfig& config, std::uint64_t seed);

// exp of the mean per-token negative log-likelihood, counting every real
// token and the terminal eos, never pad. Out-of-range ids map to unk.
// Invariant to sentence order and batch grouping.
double perplexity(const LanguageModel& lm, const std::vector<std::vector<int>>& sentences);

// Trains a fresh model on the generated set and measures it on real held-out
// text: inflated numbers expose mode collapse. Requires at least
// `kMinReverseCorpus` generated sentences (ConfigError below that).
inline constexpr std::size_t kMinReverseCorpus = 1000;

double reverse_perplexity(const std::vector<std::vector<int>>& generated,
                          const std::vector<std::vector<int>>& real_heldout,
                          std::size_t vocab_size, const LmConfig& config, std::uint64_t seed);

}  // namespace cae
