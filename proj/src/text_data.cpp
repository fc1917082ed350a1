#include "cae/text_data.hpp"

#include "cae/tensor.hpp"  // splitmix64

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cae {

namespace {

constexpr const char* kSpecialTokens[Vocabulary::num_specials] = {"<pad>", "<bos>", "<eos>",
                                                                  "<unk>"};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

const char* style_name(StyleLabel label) { return label == StyleLabel::s1 ? "style1" : "style2"; }

// ==== Vocabulary ====

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(id_to_token.size()));
  }
  return id_to_token[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_tokens(const std::string& line, bool lowercase) {
  std::istringstream in(line);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) {
    if (lowercase) {
      for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    tokens.push_back(tok);
  }
  return tokens;
}

Vocabulary build_vocabulary_from_lines(const std::vector<std::string>& lines,
                                       std::size_t max_size, bool lowercase) {
  if (max_size < 1) {
    throw ConfigError("vocabulary max_size must be >= 1, got " + std::to_string(max_size));
  }
  // Count with first-occurrence order so equal frequencies sort stably.
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& line : lines) {
    for (auto& tok : split_tokens(line, lowercase)) {
      auto [it, inserted] = counts.emplace(std::move(tok), 0);
      if (inserted) order.push_back(it->first);
      ++it->second;
    }
  }
  std::unordered_map<std::string, std::size_t> first_seen;
  first_seen.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) first_seen[order[i]] = i;
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const std::size_t ca = counts[a], cb = counts[b];
    if (ca != cb) return ca > cb;
    return first_seen[a] < first_seen[b];
  });
  if (order.size() > max_size) order.resize(max_size);

  Vocabulary vocab;
  vocab.max_size = max_size;
  vocab.id_to_token.assign(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  for (std::size_t i = 0; i < Vocabulary::num_specials; ++i) {
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  }
  for (auto& tok : order) {
    vocab.token_to_id[tok] = static_cast<int>(vocab.id_to_token.size());
    vocab.id_to_token.push_back(std::move(tok));
  }
  return vocab;
}

Vocabulary build_vocabulary(const std::vector<std::string>& files, std::size_t max_size,
                            bool lowercase) {
  if (max_size < 1) {
    throw ConfigError("vocabulary max_size must be >= 1, got " + std::to_string(max_size));
  }
  std::vector<std::string> lines;
  for (const auto& path : files) {
    auto file_lines = read_lines(path);
    lines.insert(lines.end(), std::make_move_iterator(file_lines.begin()),
                 std::make_move_iterator(file_lines.end()));
  }
  return build_vocabulary_from_lines(lines, max_size, lowercase);
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& tok : vocab.id_to_token) out << tok << "\n";
  if (!out) throw IoError("failed writing vocabulary to " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
  auto lines = read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < Vocabulary::num_specials) {
    throw IoError("vocabulary file " + path + " is missing the special tokens");
  }
  for (std::size_t i = 0; i < Vocabulary::num_specials; ++i) {
    if (lines[i] != kSpecialTokens[i]) {
      throw IoError("vocabulary file " + path + " does not start with the special tokens");
    }
  }
  Vocabulary vocab;
  vocab.id_to_token = std::move(lines);
  vocab.max_size = vocab.id_to_token.size() - Vocabulary::num_specials;
  for (std::size_t i = 0; i < vocab.id_to_token.size(); ++i) {
    vocab.token_to_id[vocab.id_to_token[i]] = static_cast<int>(i);
  }
  return vocab;
}

// ==== sentences and corpora ====

std::vector<int> encode_sentence(const std::string& text, const Vocabulary& vocab,
                                 bool lowercase) {
  auto tokens = split_tokens(text, lowercase);
  if (tokens.empty()) {
    throw DegenerateInputError("encode_sentence: no tokens after whitespace split");
  }
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(vocab.id_of(tok));
  return ids;
}

std::string decode_sentence(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += vocab.token_of(id);
  }
  return out;
}

Corpus corpus_from_lines(const std::vector<std::string>& lines, const Vocabulary& vocab,
                         StyleLabel label, bool lowercase) {
  Corpus corpus;
  corpus.style_label = label;
  for (const auto& line : lines) {
    auto tokens = split_tokens(line, lowercase);
    if (tokens.empty()) {
      ++corpus.skipped_empty_lines;
      continue;
    }
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& tok : tokens) ids.push_back(vocab.id_of(tok));
    corpus.sentences.push_back(std::move(ids));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, const Vocabulary& vocab, StyleLabel label,
                   bool lowercase) {
  Corpus corpus = corpus_from_lines(read_lines(path), vocab, label, lowercase);
  corpus.source_path = path;
  return corpus;
}

// ==== batching ====

void deterministic_shuffle(std::vector<std::size_t>& indices, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(splitmix64(state) % i);
    std::swap(indices[i - 1], indices[j]);
  }
}

std::vector<Batch> make_batches(const Corpus& corpus, std::size_t batch_size,
                                std::size_t max_len, std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");

  std::vector<std::size_t> order(corpus.sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  deterministic_shuffle(order, shuffle_seed);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    Batch batch;
    batch.style_label = corpus.style_label;
    batch.batch_size = end - start;

    std::size_t longest = 1;
    for (std::size_t i = start; i < end; ++i) {
      longest = std::max(longest, std::min(corpus.sentences[order[i]].size(), max_len));
    }
    batch.max_len = longest;
    const std::size_t W = longest + 1;

    batch.inputs.assign(batch.batch_size * longest, Vocabulary::pad_id);
    batch.decoder_inputs.assign(batch.batch_size * W, Vocabulary::pad_id);
    batch.decoder_targets.assign(batch.batch_size * W, Vocabulary::pad_id);
    batch.target_weights.assign(batch.batch_size * W, 0.0);
    batch.lengths.resize(batch.batch_size);

    for (std::size_t r = 0; r < batch.batch_size; ++r) {
      const auto& sent = corpus.sentences[order[start + r]];
      const std::size_t len = std::min(sent.size(), max_len);
      batch.lengths[r] = len;
      batch.decoder_inputs[r * W] = Vocabulary::bos_id;
      for (std::size_t t = 0; t < len; ++t) {
        batch.inputs[r * longest + t] = sent[t];
        batch.decoder_inputs[r * W + t + 1] = sent[t];
        batch.decoder_targets[r * W + t] = sent[t];
        batch.target_weights[r * W + t] = 1.0;
      }
      batch.decoder_targets[r * W + len] = Vocabulary::eos_id;
      batch.target_weights[r * W + len] = 1.0;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t count,
                                                    const std::vector<double>& fractions,
                                                    std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(total));
  }
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  deterministic_shuffle(order, seed);

  std::vector<std::vector<std::size_t>> parts(fractions.size());
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < fractions.size(); ++p) {
    std::size_t take = static_cast<std::size_t>(
        std::llround(fractions[p] * static_cast<double>(count)));
    if (p + 1 == fractions.size()) take = count - cursor;  // remainder absorbs rounding
    take = std::min(take, count - cursor);
    parts[p].assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                    order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
  }
  return parts;
}

}  // namespace cae
