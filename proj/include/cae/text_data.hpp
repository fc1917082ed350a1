#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cae/errors.hpp"

namespace cae {

// The two unlabeled corpora the model learns to translate between.
enum class StyleLabel { s1, s2 };

const char* style_name(StyleLabel label);

// Token inventory with reserved specials at fixed ids. Immutable once built.
struct Vocabulary {
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;
  static constexpr int unk_id = 3;
  static constexpr std::size_t num_specials = 4;

  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;  // specials occupy slots 0-3
  std::size_t max_size = 0;              // cap on non-special entries

  std::size_t size() const { return id_to_token.size(); }

  // In-vocabulary id, or unk for unknown tokens.
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
};

// Keeps the `max_size` most frequent tokens across all files; ties broken by
// first occurrence. Everything else later encodes to unk.
Vocabulary build_vocabulary(const std::vector<std::string>& files, std::size_t max_size,
                            bool lowercase = false);
// Same construction from in-memory lines (used by generators and bindings).
Vocabulary build_vocabulary_from_lines(const std::vector<std::string>& lines,
                                       std::size_t max_size, bool lowercase = false);

void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

// Whitespace tokenization; optional ASCII lowercasing.
std::vector<std::string> split_tokens(const std::string& line, bool lowercase = false);

// Token ids for one sentence (no bos/eos). Unknown tokens map to unk.
// Throws DegenerateInputError when the line has no tokens.
std::vector<int> encode_sentence(const std::string& text, const Vocabulary& vocab,
                                 bool lowercase = false);
// Space-joined tokens for a sequence of ids.
std::string decode_sentence(const std::vector<int>& ids, const Vocabulary& vocab);

// One styled corpus: sentences as id sequences, bos/eos added at batch time.
struct Corpus {
  StyleLabel style_label = StyleLabel::s1;
  std::vector<std::vector<int>> sentences;
  std::string source_path;
  std::size_t skipped_empty_lines = 0;
};

Corpus load_corpus(const std::string& path, const Vocabulary& vocab, StyleLabel label,
                   bool lowercase = false);
Corpus corpus_from_lines(const std::vector<std::string>& lines, const Vocabulary& vocab,
                         StyleLabel label, bool lowercase = false);

// Padded minibatch. `inputs` holds the raw tokens for the encoder; the
// decoder views are the same rows shifted: inputs prefixed with bos, targets
// suffixed with eos. All three are row-major.
struct Batch {
  std::size_t batch_size = 0;  // B
  std::size_t max_len = 0;     // L: longest (truncated) sentence in the batch
  StyleLabel style_label = StyleLabel::s1;

  std::vector<int> inputs;            // [B x L], pad after each true length
  std::vector<std::size_t> lengths;   // true lengths, <= L
  std::vector<int> decoder_inputs;    // [B x (L+1)]: bos + tokens + pad
  std::vector<int> decoder_targets;   // [B x (L+1)]: tokens + eos + pad
  std::vector<double> target_weights;  // [B x (L+1)]: 1 through eos, 0 on pad
};

// Partitions the corpus into minibatches in a seed-determined shuffled order.
// Sentences longer than max_len are truncated; each appears exactly once.
std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::size_t max_len, std::uint64_t shuffle_seed);

// Seed-determined permutation split into consecutive fraction buckets
// (e.g. {0.7, 0.1, 0.2}); every index lands in exactly one bucket.
std::vector<std::vector<std::size_t>> split_indices(std::size_t count,
                                                    const std::vector<double>& fractions,
                                                    std::uint64_t seed);

// In-place Fisher-Yates driven by splitmix64, shared by batching/splitting so
// shuffles are reproducible independent of the standard library.
void deterministic_shuffle(std::vector<std::size_t>& indices, std::uint64_t seed);

}  // namespace cae
