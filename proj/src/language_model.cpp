#include <algorithm>
#include <cmath>
#include <string>

#include "cae/language_model.hpp"

namespace cae {

namespace {

// ==== sequence plumbing ====

int safe_id(int id, std::size_t vocab) {
  return id >= 0 && static_cast<std::size_t>(id) < vocab ? id : Vocabulary::unk_id;
}

// Next-token views for a group of rows: inputs are bos + tokens, targets are
// tokens + eos, weight 1 through the eos and 0 on padding. Zero-length rows
// are legal here — they still predict their eos.
struct LmBatch {
  std::size_t batch = 0;
  std::size_t width = 0;
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<double> weights;
};

LmBatch build_lm_batch(const std::vector<const std::vector<int>*>& rows, std::size_t vocab,
                       std::size_t truncate_at) {
  LmBatch b;
  b.batch = rows.size();
  std::size_t longest = 0;
  for (const auto* row : rows) longest = std::max(longest, std::min(row->size(), truncate_at));
  b.width = longest + 1;
  b.inputs.assign(b.batch * b.width, Vocabulary::pad_id);
  b.targets.assign(b.batch * b.width, Vocabulary::pad_id);
  b.weights.assign(b.batch * b.width, 0.0);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const std::vector<int>& row = *rows[i];
    const std::size_t len = std::min(row.size(), truncate_at);
    b.inputs[i * b.width] = Vocabulary::bos_id;
    for (std::size_t t = 0; t < len; ++t) {
      const int id = safe_id(row[t], vocab);
      b.inputs[i * b.width + t + 1] = id;
      b.targets[i * b.width + t] = id;
      b.weights[i * b.width + t] = 1.0;
    }
    b.targets[i * b.width + len] = Vocabulary::eos_id;
    b.weights[i * b.width + len] = 1.0;
  }
  return b;
}

Tensor dropout_mask(Shape shape, double drop, std::uint64_t& state) {
  const double keep = 1.0 - drop;
  std::vector<double> mask(shape_numel(shape));
  for (double& m : mask) {
    const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    m = u < keep ? 1.0 / keep : 0.0;
  }
  return Tensor::from_values(std::move(shape), std::move(mask));
}

// Weighted-mean cross entropy over one batch; dropout only when a state
// stream is supplied (training).
Tensor lm_nll(const LanguageModel& lm, const LmBatch& batch, std::uint64_t* drop_state) {
  const std::size_t B = batch.batch, W = batch.width;
  LstmState state = lstm_initial_state(B, lm.config.hidden);
  std::vector<Tensor> step_logits;
  step_logits.reserve(W);
  std::vector<int> column(B);
  for (std::size_t t = 0; t < W; ++t) {
    for (std::size_t i = 0; i < B; ++i) column[i] = batch.inputs[i * W + t];
    Tensor x = embedding_lookup(lm.embedding, column);
    if (drop_state != nullptr && lm.config.dropout > 0.0) {
      x = mul(x, dropout_mask({B, lm.config.embedding}, lm.config.dropout, *drop_state));
    }
    state = lstm_step(lm.cell, x, state);
    Tensor pre = state.h;
    if (drop_state != nullptr && lm.config.dropout > 0.0) {
      pre = mul(pre, dropout_mask({B, lm.config.hidden}, lm.config.dropout, *drop_state));
    }
    step_logits.push_back(matmul(pre, lm.projection));
  }
  const Tensor logits = reshape(stack_steps(step_logits), {B * W, lm.vocab});
  return softmax_cross_entropy(logits, batch.targets, batch.weights);
}

double total_weight(const LmBatch& batch) {
  double sum = 0.0;
  for (double w : batch.weights) sum += w;
  return sum;
}

void validate_lm_config(const LmConfig& config) {
  if (config.embedding == 0 || config.hidden == 0 || config.batch_size == 0 ||
      config.max_len == 0 || config.lr <= 0.0 || config.dropout < 0.0 || config.dropout >= 1.0) {
    throw ConfigError("invalid language model configuration");
  }
}

}  // namespace

LanguageModel train_lm(const std::vector<std::vector<int>>& sentences, std::size_t vocab_size,
                       const LmConfig& config, std::uint64_t seed) {
  validate_lm_config(config);
  if (vocab_size <= Vocabulary::num_specials) {
    throw ConfigError("language model vocabulary must extend past the special tokens");
  }
  std::vector<const std::vector<int>*> rows;
  for (const auto& s : sentences) {
    if (!s.empty()) rows.push_back(&s);
  }
  if (rows.empty()) throw ConfigError("language model training needs non-empty sentences");

  LanguageModel lm;
  lm.vocab = vocab_size;
  lm.config = config;
  const std::size_t e = config.embedding, h = config.hidden;
  const double r = 1.0 / std::sqrt(static_cast<double>(h));
  std::uint64_t state = seed;
  lm.embedding =
      Tensor::parameter({vocab_size, e}, uniform_values(vocab_size * e, r, state), "lm.embedding");
  lm.cell.W = Tensor::parameter({4 * h, e}, uniform_values(4 * h * e, r, state), "lm.W");
  lm.cell.U = Tensor::parameter({4 * h, h}, uniform_values(4 * h * h, r, state), "lm.U");
  lm.cell.b = Tensor::parameter({4 * h}, uniform_values(4 * h, r, state), "lm.b");
  lm.cell.hidden = h;
  lm.cell.input = e;
  lm.projection =
      Tensor::parameter({h, vocab_size}, uniform_values(h * vocab_size, r, state), "lm.projection");
  const std::vector<Tensor> params{lm.embedding, lm.cell.W, lm.cell.U, lm.cell.b, lm.projection};

  Optimizer opt(Optimizer::Kind::adam, config.lr);
  std::uint64_t drop_state = splitmix64(state);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(order, splitmix64(state));
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(begin + config.batch_size, order.size());
      std::vector<const std::vector<int>*> group;
      group.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) group.push_back(rows[order[i]]);
      const LmBatch batch = build_lm_batch(group, vocab_size, config.max_len);

      for (const Tensor& p : params) {
        Tensor(p).zero_grad();
      }
      Tape tape;
      TapeScope scope(tape);
      const Tensor nll = lm_nll(lm, batch, &drop_state);
      if (!std::isfinite(nll.scalar_value())) {
        throw TrainingDivergenceError("language model loss diverged", step);
      }
      backward(nll, tape);
      opt.step(params);
      ++step;
    }
  }
  return lm;
}

double perplexity(const LanguageModel& lm, const std::vector<std::vector<int>>& sentences) {
  if (sentences.empty()) throw ContractError("perplexity needs at least one sentence");
  double total_nll = 0.0;
  double total_tokens = 0.0;
  for (std::size_t begin = 0; begin < sentences.size(); begin += lm.config.batch_size) {
    const std::size_t end = std::min(begin + lm.config.batch_size, sentences.size());
    std::vector<const std::vector<int>*> group;
    group.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) group.push_back(&sentences[i]);
    const LmBatch batch =
        build_lm_batch(group, lm.vocab, std::numeric_limits<std::size_t>::max());
    const double tokens = total_weight(batch);
    total_nll += lm_nll(lm, batch, nullptr).scalar_value() * tokens;
    total_tokens += tokens;
  }
  return std::exp(total_nll / total_tokens);
}

double reverse_perplexity(const std::vector<std::vector<int>>& generated,
                          const std::vector<std::vector<int>>& real_heldout,
                          std::size_t vocab_size, const LmConfig& config, std::uint64_t seed) {
  if (generated.size() < kMinReverseCorpus) {
    throw ConfigError("reverse perplexity needs at least " + std::to_string(kMinReverseCorpus) +
                      " generated sentences, got " + std::to_string(generated.size()));
  }
  const LanguageModel lm = train_lm(generated, vocab_size, config, seed);
  return perplexity(lm, real_heldout);
}

}  // namespace cae
