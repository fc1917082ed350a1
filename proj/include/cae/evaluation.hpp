#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cae/model.hpp"
#include "cae/text_data.hpp"

namespace cae {

// ==== style classifier (the transfer-rate judge) ====

struct ClassifierConfig {
  std::size_t embedding_dim = 10;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double heldout_fraction = 0.1;
  // Stop once held-out accuracy has not improved for this many epochs.
  std::size_t patience = 3;
};

// Bag-of-words sentence judge: per-token embeddings are averaged and passed
// through one linear unit with a sigmoid. The score is the probability the
// sentence belongs to style s2; label = score >= 0.5.
struct StyleClassifier {
  Tensor embedding;  // [V x dim]
  Tensor weight;     // [dim x 1]
  Tensor bias;       // [1]
  std::size_t vocab = 0;
  std::size_t dim = 0;
  double heldout_accuracy = 0.0;  // best held-out accuracy reached in training
};

// Trains on both labeled corpora until the held-out accuracy plateaus; the
// best-epoch parameters are kept. Deterministic per seed. Throws ConfigError
// when either corpus is empty (single-class data).
StyleClassifier train_classifier(const Corpus& style1, const Corpus& style2,
                                 const ClassifierConfig& config, std::uint64_t seed);

// P(style s2) for one sentence. Out-of-range ids count as unk; a sentence
// with no tokens scores from the bias alone (zero average embedding).
double classifier_score(const StyleClassifier& classifier, const std::vector<int>& sentence);

StyleLabel classify(const StyleClassifier& classifier, const std::vector<int>& sentence);

// Fraction of sentences the classifier assigns to `target`. Throws
// ContractError on an empty sentence list.
double transfer_rate(const StyleClassifier& classifier,
                     const std::vector<std::vector<int>>& sentences, StyleLabel target);

// ==== BLEU ====

// Sentence-level BLEU-4 in [0, 100]: uniform quarter weights, brevity
// penalty, raw unigram precision, add-one smoothing on orders 2-4 so short
// sentences are not zeroed by a missing high order. Zero unigram overlap or
// an empty candidate scores 0; an empty reference is a ContractError.
double bleu(const std::vector<int>& candidate, const std::vector<int>& reference);

// Corpus-level BLEU-4 over aligned pairs: clipped counts and lengths are
// pooled before the same precision/penalty formula is applied.
double corpus_bleu(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references);

// ==== Jaccard nearest neighbour ====

struct JaccardMatch {
  std::size_t index = 0;   // position of the best match in the corpus
  double distance = 1.0;   // 1 - |A intersect B| / |A union B| over token sets
};

// Exhaustive scan for the corpus sentence with the smallest Jaccard distance
// to `sentence`; ties keep the earliest index. Empty corpus → ContractError.
JaccardMatch nearest_neighbor_jaccard(const std::vector<int>& sentence,
                                      const std::vector<std::vector<int>>& corpus);

double jaccard_distance(const std::vector<int>& a, const std::vector<int>& b);

// ==== report ====

struct SentenceRecord {
  std::string source;
  std::string output;
  double classifier_score = 0.0;
  double sentence_bleu = 0.0;
};

struct EvalReport {
  double transfer_rate = 0.0;
  double bleu = 0.0;                // corpus-level, transferred vs source
  double bleu_sentence_mean = 0.0;  // mean of per-sentence scores
  double ppl = 0.0;
  double rppl = 0.0;
  double classifier_heldout_accuracy = 0.0;
  std::vector<SentenceRecord> records;
};

// One key=value line per metric, a records count, then one tab-separated row
// per sentence: source, output, classifier score, sentence BLEU.
void write_eval_report(const EvalReport& report, std::ostream& out);
void write_eval_report(const EvalReport& report, const std::string& path);

}  // namespace cae
