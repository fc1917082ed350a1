#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cae/model.hpp"
#include "cae/text_data.hpp"

namespace cae {

// One sentence pushed through encode -> transfer -> greedy decode.
struct TransferResult {
  std::vector<int> source_tokens;
  std::vector<int> transferred_tokens;  // no pad/bos; ends at eos or max_len
  Direction direction = Direction::s1_to_s2;
  // ||cycle_map(z) - z||_1 for this sentence's latent; a cheap health signal
  // for the round-trip constraint at test time.
  double latent_cycle_residual = 0.0;
};

// Feed-back argmax decoding from a single unit-norm latent ([h] or [1 x h]).
// Starts from bos, emits the highest-logit token each step (pad and bos are
// never candidates, so the output invariant holds by construction; ties break
// toward the lowest id), and stops after eos or max_len tokens. A terminal
// eos, when reached, is included in the returned list.
std::vector<int> greedy_decode(const StyleAutoencoder& ae, const Tensor& z, std::size_t max_len);

// Encode with the source style, map the latent through the matching transfer
// net, then greedily decode with the target style's decoder. Deterministic
// for a frozen model.
TransferResult transfer_text(const CaeModel& model, const std::vector<int>& sentence,
                             Direction direction, std::size_t max_len = 20);

// Whole-corpus transfer away from the corpus's own style; output order
// matches input order.
std::vector<TransferResult> transfer_corpus(const CaeModel& model, const Corpus& corpus,
                                            std::size_t max_len = 20);

// Space-joined surface form of the transferred tokens with the terminal eos
// stripped — the form batch transfer mode writes, one sentence per line.
std::string transferred_sentence(const TransferResult& result, const Vocabulary& vocab);

}  // namespace cae
