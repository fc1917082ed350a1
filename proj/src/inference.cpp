#include <cmath>
#include <span>
#include <string>

#include "cae/inference.hpp"

namespace cae {

namespace {

// ==== latent plumbing ====

Tensor latent_row(const Tensor& z, std::size_t hidden) {
  if (z.rank() == 1 && z.shape()[0] == hidden) return reshape(z, {1, hidden});
  if (z.rank() == 2 && z.shape()[0] == 1 && z.shape()[1] == hidden) return z;
  throw DimensionError("greedy_decode expects one latent of width " + std::to_string(hidden) +
                       ", got " + shape_to_string(z.shape()));
}

void check_unit_latent(const Tensor& row) {
  double sq = 0.0;
  for (double v : row.values()) sq += v * v;
  if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
    throw ContractError("greedy_decode requires a unit-norm latent");
  }
}

Batch single_sentence_batch(const std::vector<int>& sentence, StyleLabel label) {
  Batch b;
  b.batch_size = 1;
  b.max_len = sentence.size();
  b.style_label = label;
  b.inputs = sentence;
  b.lengths = {sentence.size()};
  b.decoder_inputs.reserve(sentence.size() + 1);
  b.decoder_inputs.push_back(Vocabulary::bos_id);
  b.decoder_inputs.insert(b.decoder_inputs.end(), sentence.begin(), sentence.end());
  b.decoder_targets = sentence;
  b.decoder_targets.push_back(Vocabulary::eos_id);
  b.target_weights.assign(sentence.size() + 1, 1.0);
  return b;
}

}  // namespace

// ==== decoding ====

std::vector<int> greedy_decode(const StyleAutoencoder& ae, const Tensor& z, std::size_t max_len) {
  const Tensor row = latent_row(z, ae.hidden);
  check_unit_latent(row);

  LstmState state = lstm_initial_state(1, ae.hidden);
  state.h = row;
  std::vector<int> out;
  int current = Vocabulary::bos_id;
  for (std::size_t t = 0; t < max_len; ++t) {
    const Tensor x = embedding_lookup(ae.embedding, std::span<const int>(&current, 1));
    state = lstm_step(ae.decoder, x, state);
    const Tensor logits = matmul(state.h, ae.projection);  // [1 x V]
    const std::span<const double> scores = logits.values();
    int best = Vocabulary::eos_id;
    for (std::size_t j = Vocabulary::eos_id + 1; j < scores.size(); ++j) {
      if (scores[j] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    out.push_back(best);
    if (best == Vocabulary::eos_id) break;
    current = best;
  }
  return out;
}

TransferResult transfer_text(const CaeModel& model, const std::vector<int>& sentence,
                             Direction direction, std::size_t max_len) {
  if (sentence.empty()) throw ContractError("transfer_text requires a non-empty sentence");
  if (max_len == 0) throw ContractError("transfer_text requires max_len >= 1");

  const StyleLabel source = direction == Direction::s1_to_s2 ? StyleLabel::s1 : StyleLabel::s2;
  const StyleLabel target = direction == Direction::s1_to_s2 ? StyleLabel::s2 : StyleLabel::s1;

  const Batch batch = single_sentence_batch(sentence, source);
  const Tensor z = encode(model.autoencoder(source), batch);
  const Tensor mapped = transfer(model.transfer_net(direction), z);
  const Tensor cycled = cycle_map(model, z, direction);

  TransferResult result;
  result.source_tokens = sentence;
  result.direction = direction;
  result.latent_cycle_residual = l1_distance(cycled, z).scalar_value();
  result.transferred_tokens = greedy_decode(model.autoencoder(target), mapped, max_len);
  return result;
}

std::vector<TransferResult> transfer_corpus(const CaeModel& model, const Corpus& corpus,
                                            std::size_t max_len) {
  const Direction direction =
      corpus.style_label == StyleLabel::s1 ? Direction::s1_to_s2 : Direction::s2_to_s1;
  std::vector<TransferResult> results;
  results.reserve(corpus.sentences.size());
  for (const auto& sentence : corpus.sentences) {
    results.push_back(transfer_text(model, sentence, direction, max_len));
  }
  return results;
}

std::string transferred_sentence(const TransferResult& result, const Vocabulary& vocab) {
  std::vector<int> ids = result.transferred_tokens;
  if (!ids.empty() && ids.back() == Vocabulary::eos_id) ids.pop_back();
  return decode_sentence(ids, vocab);
}

}  // namespace cae
