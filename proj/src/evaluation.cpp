#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>

#include "cae/evaluation.hpp"
#include "cae/losses.hpp"

namespace cae {

namespace {

// ==== classifier internals ====

int safe_id(int id, std::size_t vocab) {
  return id >= 0 && static_cast<std::size_t>(id) < vocab ? id : Vocabulary::unk_id;
}

struct LabeledSet {
  std::vector<const std::vector<int>*> sentences;
  std::vector<double> labels;  // 0 = s1, 1 = s2
};

// One gradient step on a slice of the labeled pool: averaged embeddings via a
// constant [B x T] averaging matrix, one linear unit, clamped BCE.
void classifier_step(StyleClassifier& clf, const LabeledSet& pool,
                     const std::vector<std::size_t>& order, std::size_t begin, std::size_t end,
                     Optimizer& opt) {
  const std::size_t B = end - begin;
  std::vector<int> ids;
  std::vector<std::size_t> offsets(B + 1, 0);
  for (std::size_t i = 0; i < B; ++i) {
    const std::vector<int>& s = *pool.sentences[order[begin + i]];
    for (int id : s) ids.push_back(safe_id(id, clf.vocab));
    offsets[i + 1] = ids.size();
  }
  const std::size_t T = ids.size();

  std::vector<double> averaging(B * T, 0.0);
  std::vector<double> y(B), ym(B);
  for (std::size_t i = 0; i < B; ++i) {
    y[i] = pool.labels[order[begin + i]];
    ym[i] = 1.0 - y[i];
    const double inv = 1.0 / static_cast<double>(offsets[i + 1] - offsets[i]);
    for (std::size_t t = offsets[i]; t < offsets[i + 1]; ++t) averaging[i * T + t] = inv;
  }

  Tape tape;
  TapeScope scope(tape);
  const Tensor avg = matmul(Tensor::from_values({B, T}, std::move(averaging)),
                            embedding_lookup(clf.embedding, ids));
  const Tensor p = sigmoid(reshape(add(matmul(avg, clf.weight), clf.bias), {B}));
  const Tensor log_p = log(clamp(p, kProbClampLo, kProbClampHi));
  const Tensor log_not_p = log(clamp(add_scalar(neg(p), 1.0), kProbClampLo, kProbClampHi));
  const Tensor obj = neg(scale(sum(add(mul(Tensor::from_values({B}, std::move(y)), log_p),
                                       mul(Tensor::from_values({B}, std::move(ym)), log_not_p))),
                               1.0 / static_cast<double>(B)));
  backward(obj, tape);
  opt.step({clf.embedding, clf.weight, clf.bias});
}

double accuracy_on(const StyleClassifier& clf, const LabeledSet& pool,
                   const std::vector<std::size_t>& indices) {
  std::size_t hits = 0;
  for (std::size_t i : indices) {
    const double score = classifier_score(clf, *pool.sentences[i]);
    const double predicted = score >= 0.5 ? 1.0 : 0.0;
    if (predicted == pool.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

std::vector<double> copy_values(const Tensor& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

}  // namespace

StyleClassifier train_classifier(const Corpus& style1, const Corpus& style2,
                                 const ClassifierConfig& config, std::uint64_t seed) {
  if (style1.sentences.empty() || style2.sentences.empty()) {
    throw ConfigError("classifier training needs sentences from both styles");
  }
  if (config.embedding_dim == 0 || config.batch_size == 0 || config.lr <= 0.0 ||
      config.heldout_fraction <= 0.0 || config.heldout_fraction >= 1.0) {
    throw ConfigError("invalid classifier configuration");
  }

  std::size_t vocab = Vocabulary::num_specials;
  LabeledSet pool;
  for (const auto& s : style1.sentences) {
    pool.sentences.push_back(&s);
    pool.labels.push_back(0.0);
  }
  for (const auto& s : style2.sentences) {
    pool.sentences.push_back(&s);
    pool.labels.push_back(1.0);
  }
  for (const auto* s : pool.sentences) {
    for (int id : *s) vocab = std::max(vocab, static_cast<std::size_t>(id) + 1);
  }

  StyleClassifier clf;
  clf.vocab = vocab;
  clf.dim = config.embedding_dim;
  std::uint64_t state = seed;
  clf.embedding = Tensor::parameter({vocab, clf.dim}, uniform_values(vocab * clf.dim, 0.1, state),
                                    "clf.embedding");
  clf.weight = Tensor::parameter({clf.dim, 1}, uniform_values(clf.dim, 0.1, state), "clf.weight");
  clf.bias = Tensor::parameter({1}, uniform_values(1, 0.1, state), "clf.bias");

  const auto buckets = split_indices(pool.sentences.size(),
                                     {1.0 - config.heldout_fraction, config.heldout_fraction},
                                     splitmix64(state));
  std::vector<std::size_t> train = buckets[0];
  const std::vector<std::size_t>& heldout = buckets[1].empty() ? buckets[0] : buckets[1];

  Optimizer opt(Optimizer::Kind::adam, config.lr);
  double best = accuracy_on(clf, pool, heldout);
  std::vector<std::vector<double>> snapshot{copy_values(clf.embedding), copy_values(clf.weight),
                                            copy_values(clf.bias)};
  std::size_t stall = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(train, splitmix64(state));
    for (std::size_t begin = 0; begin < train.size(); begin += config.batch_size) {
      classifier_step(clf, pool, train, begin, std::min(begin + config.batch_size, train.size()),
                      opt);
    }
    const double acc = accuracy_on(clf, pool, heldout);
    if (acc > best) {
      best = acc;
      snapshot = {copy_values(clf.embedding), copy_values(clf.weight), copy_values(clf.bias)};
      stall = 0;
    } else if (++stall >= config.patience) {
      break;
    }
  }

  std::copy(snapshot[0].begin(), snapshot[0].end(), clf.embedding.mutable_values().begin());
  std::copy(snapshot[1].begin(), snapshot[1].end(), clf.weight.mutable_values().begin());
  std::copy(snapshot[2].begin(), snapshot[2].end(), clf.bias.mutable_values().begin());
  clf.heldout_accuracy = best;
  return clf;
}

double classifier_score(const StyleClassifier& classifier, const std::vector<int>& sentence) {
  std::vector<double> avg(classifier.dim, 0.0);
  if (!sentence.empty()) {
    const std::span<const double> table = classifier.embedding.values();
    for (int raw : sentence) {
      const std::size_t id = static_cast<std::size_t>(safe_id(raw, classifier.vocab));
      for (std::size_t k = 0; k < classifier.dim; ++k) avg[k] += table[id * classifier.dim + k];
    }
    for (double& v : avg) v /= static_cast<double>(sentence.size());
  }
  double logit = classifier.bias.value_at(0);
  for (std::size_t k = 0; k < classifier.dim; ++k) {
    logit += avg[k] * classifier.weight.value_at(k);
  }
  return 1.0 / (1.0 + std::exp(-logit));
}

StyleLabel classify(const StyleClassifier& classifier, const std::vector<int>& sentence) {
  return classifier_score(classifier, sentence) >= 0.5 ? StyleLabel::s2 : StyleLabel::s1;
}

double transfer_rate(const StyleClassifier& classifier,
                     const std::vector<std::vector<int>>& sentences, StyleLabel target) {
  if (sentences.empty()) throw ContractError("transfer_rate needs at least one sentence");
  std::size_t hits = 0;
  for (const auto& s : sentences) {
    if (classify(classifier, s) == target) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sentences.size());
}

// ==== BLEU ====

namespace {

constexpr int kBleuOrder = 4;

struct BleuStats {
  std::size_t matched[kBleuOrder] = {0, 0, 0, 0};
  std::size_t total[kBleuOrder] = {0, 0, 0, 0};
  std::size_t candidate_len = 0;
  std::size_t reference_len = 0;
};

std::map<std::vector<int>, std::size_t> ngram_counts(const std::vector<int>& tokens, int n) {
  std::map<std::vector<int>, std::size_t> counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)] += 1;
  }
  return counts;
}

void accumulate_pair(BleuStats& stats, const std::vector<int>& candidate,
                     const std::vector<int>& reference) {
  if (reference.empty()) throw ContractError("bleu needs a non-empty reference");
  stats.candidate_len += candidate.size();
  stats.reference_len += reference.size();
  for (int n = 1; n <= kBleuOrder; ++n) {
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    for (const auto& [gram, count] : cand) {
      stats.total[n - 1] += count;
      const auto it = ref.find(gram);
      if (it != ref.end()) stats.matched[n - 1] += std::min(count, it->second);
    }
  }
}

// Raw unigram precision, add-one smoothing on the higher orders, brevity
// penalty on pooled lengths.
double score_from_stats(const BleuStats& stats) {
  if (stats.total[0] == 0 || stats.matched[0] == 0) return 0.0;
  double log_precisions =
      std::log(static_cast<double>(stats.matched[0]) / static_cast<double>(stats.total[0]));
  for (int n = 2; n <= kBleuOrder; ++n) {
    log_precisions += std::log(static_cast<double>(stats.matched[n - 1] + 1) /
                               static_cast<double>(stats.total[n - 1] + 1));
  }
  const double brevity =
      stats.candidate_len >= stats.reference_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(stats.reference_len) /
                               static_cast<double>(stats.candidate_len));
  return 100.0 * brevity * std::exp(log_precisions / kBleuOrder);
}

}  // namespace

double bleu(const std::vector<int>& candidate, const std::vector<int>& reference) {
  BleuStats stats;
  accumulate_pair(stats, candidate, reference);
  return score_from_stats(stats);
}

double corpus_bleu(const std::vector<std::vector<int>>& candidates,
                   const std::vector<std::vector<int>>& references) {
  if (candidates.empty() || candidates.size() != references.size()) {
    throw ContractError("corpus_bleu needs aligned, non-empty candidate/reference lists");
  }
  BleuStats stats;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    accumulate_pair(stats, candidates[i], references[i]);
  }
  return score_from_stats(stats);
}

// ==== Jaccard nearest neighbour ====

namespace {

std::vector<int> token_set(const std::vector<int>& tokens) {
  std::vector<int> set = tokens;
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return set;
}

double set_jaccard(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter, ++i, ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 0.0;
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double jaccard_distance(const std::vector<int>& a, const std::vector<int>& b) {
  return set_jaccard(token_set(a), token_set(b));
}

JaccardMatch nearest_neighbor_jaccard(const std::vector<int>& sentence,
                                      const std::vector<std::vector<int>>& corpus) {
  if (corpus.empty()) throw ContractError("nearest_neighbor_jaccard needs a non-empty corpus");
  const std::vector<int> probe = token_set(sentence);
  JaccardMatch best{0, 2.0};
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double d = set_jaccard(probe, token_set(corpus[i]));
    if (d < best.distance) best = {i, d};
  }
  return best;
}

// ==== report ====

namespace {

void write_metric(std::ostream& out, const char* key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  out << key << '=' << buf << '\n';
}

}  // namespace

void write_eval_report(const EvalReport& report, std::ostream& out) {
  write_metric(out, "transfer_rate", report.transfer_rate);
  write_metric(out, "bleu", report.bleu);
  write_metric(out, "bleu_sentence_mean", report.bleu_sentence_mean);
  write_metric(out, "ppl", report.ppl);
  write_metric(out, "rppl", report.rppl);
  write_metric(out, "classifier_heldout_accuracy", report.classifier_heldout_accuracy);
  out << "records=" << report.records.size() << '\n';
  char buf[64];
  for (const SentenceRecord& r : report.records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.classifier_score);
    out << r.source << '\t' << r.output << '\t' << buf;
    std::snprintf(buf, sizeof buf, "%.17g", r.sentence_bleu);
    out << '\t' << buf << '\n';
  }
}

void write_eval_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_eval_report(report, out);
  if (!out) throw IoError("failed writing report to " + path);
}

}  // namespace cae
