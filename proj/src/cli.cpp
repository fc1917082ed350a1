#include "cae/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <utility>

#include "cae/inference.hpp"
#include "cae/tensor.hpp"
#include "cae/text_data.hpp"
#include "cae/trainer.hpp"

namespace cae {

// ==== exit codes ====

int exit_code_for(const Error& error) {
  if (dynamic_cast<const TrainingDivergenceError*>(&error) != nullptr) return kExitDivergence;
  if (dynamic_cast<const IoError*>(&error) != nullptr) return kExitIo;
  return kExitConfig;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

// ==== small file / formatting helpers ====

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return buffer.str();
}

std::vector<std::string> split_lines(const std::string& bytes) {
  std::vector<std::string> lines;
  std::string::size_type pos = 0;
  while (pos < bytes.size()) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) {
      lines.push_back(bytes.substr(pos));
      break;
    }
    lines.push_back(bytes.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const std::string& line : lines) out << line << '\n';
  out.flush();
  if (!out) throw IoError("failed while writing " + path);
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::vector<int> ids_for(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& token : tokens) ids.push_back(vocab.id_of(token));
  return ids;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<std::size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(items[i]);
  return out;
}

void validate_split(const std::vector<double>& split) {
  if (split.size() != 2 && split.size() != 3) {
    throw ConfigError("--split needs two or three fractions (train/valid[/test])");
  }
  double sum = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

}  // namespace

std::uint64_t file_hash(const std::string& path) { return fnv1a(read_file_bytes(path)); }

std::string split_file_name(StyleLabel label, std::size_t bucket) {
  static constexpr const char* kBucketNames[3] = {"train", "valid", "test"};
  if (bucket >= 3) throw ConfigError("split bucket out of range");
  return std::string("split_") + style_name(label) + "_" + kBucketNames[bucket] + ".txt";
}

// ==== train ====

namespace {

// One styled corpus as parallel raw-line / token-id views, empty lines dropped
// so bucket indices address both representations interchangeably.
struct LoadedCorpus {
  std::vector<std::string> all_lines;  // as read, for vocabulary building
  std::vector<std::string> lines;      // non-empty lines only
  std::uint64_t hash = 0;
};

LoadedCorpus load_lines(const std::string& path, bool lowercase) {
  LoadedCorpus loaded;
  const std::string bytes = read_file_bytes(path);
  loaded.hash = fnv1a(bytes);
  loaded.all_lines = split_lines(bytes);
  for (const std::string& line : loaded.all_lines) {
    if (!split_tokens(line, lowercase).empty()) loaded.lines.push_back(line);
  }
  return loaded;
}

void write_manifest(const TrainOptions& o, std::uint64_t hash1, std::uint64_t hash2,
                    const std::string& path) {
  std::vector<std::string> lines;
  const TrainConfig& c = o.config;
  lines.push_back(std::string("tool_version=") + kToolVersion);
  lines.push_back("command=train");
  lines.push_back("seed=" + std::to_string(c.seed));
  lines.push_back("style1_file=" + o.style1_file);
  lines.push_back("style1_hash=" + hex64(hash1));
  lines.push_back("style2_file=" + o.style2_file);
  lines.push_back("style2_hash=" + hex64(hash2));
  lines.push_back(std::string("lowercase=") + (o.lowercase ? "1" : "0"));
  std::string split = "split=";
  for (std::size_t i = 0; i < o.split.size(); ++i) {
    if (i > 0) split += ',';
    split += g17(o.split[i]);
  }
  lines.push_back(split);
  lines.push_back("hidden=" + std::to_string(c.hidden));
  lines.push_back("lambda1=" + g17(c.lambda1));
  lines.push_back("lambda2=" + g17(c.lambda2));
  lines.push_back("lambda3=" + g17(c.lambda3));
  lines.push_back("batch_size=" + std::to_string(c.batch_size));
  lines.push_back("epochs=" + std::to_string(c.epochs));
  lines.push_back("lr_autoencoder=" + g17(c.lr_autoencoder));
  lines.push_back("lr_generator=" + g17(c.lr_generator));
  lines.push_back("lr_discriminator=" + g17(c.lr_discriminator));
  lines.push_back("disc_steps_per_gen_step=" + std::to_string(c.disc_steps_per_gen_step));
  lines.push_back("warmup_epochs=" + std::to_string(c.warmup_epochs));
  lines.push_back("max_len=" + std::to_string(c.max_len));
  lines.push_back("vocab_max_size=" + std::to_string(c.vocab_max_size));
  lines.push_back(std::string("no_cycle=") + (c.no_cycle ? "1" : "0"));
  lines.push_back(std::string("no_discriminators=") + (c.no_discriminators ? "1" : "0"));
  lines.push_back("artifact_vocab=" + o.out_dir + "/" + kVocabName);
  lines.push_back("artifact_checkpoint=" + o.out_dir + "/" + kCheckpointName);
  lines.push_back("artifact_metrics=" + o.out_dir + "/" + kMetricsName);
  for (StyleLabel label : {StyleLabel::s1, StyleLabel::s2}) {
    for (std::size_t bucket = 0; bucket < o.split.size(); ++bucket) {
      lines.push_back(std::string("artifact_") + style_name(label) + "_" +
                      (bucket == 0 ? "train" : bucket == 1 ? "valid" : "test") + "=" + o.out_dir +
                      "/" + split_file_name(label, bucket));
    }
  }
  write_lines(path, lines);
}

Corpus bucket_corpus(const Corpus& full, const std::vector<std::size_t>& indices) {
  Corpus out;
  out.style_label = full.style_label;
  out.source_path = full.source_path;
  out.sentences = gather(full.sentences, indices);
  return out;
}

}  // namespace

int run_train(const TrainOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (options.style1_file.empty() || options.style2_file.empty()) {
      throw ConfigError("train needs --style1-file and --style2-file");
    }
    if (options.out_dir.empty()) throw ConfigError("--out must not be empty");
    validate_split(options.split);
    options.config.validate();

    const LoadedCorpus raw1 = load_lines(options.style1_file, options.lowercase);
    const LoadedCorpus raw2 = load_lines(options.style2_file, options.lowercase);
    if (raw1.lines.empty()) throw ConfigError(options.style1_file + " contains no sentences");
    if (raw2.lines.empty()) throw ConfigError(options.style2_file + " contains no sentences");

    // The manifest precedes every other artifact, so any output directory
    // always names the exact inputs and configuration that produced it.
    ensure_directory(options.out_dir);
    write_manifest(options, raw1.hash, raw2.hash, options.out_dir + "/" + kManifestName);

    std::vector<std::string> vocab_lines = raw1.all_lines;
    vocab_lines.insert(vocab_lines.end(), raw2.all_lines.begin(), raw2.all_lines.end());
    const Vocabulary vocab =
        build_vocabulary_from_lines(vocab_lines, options.config.vocab_max_size, options.lowercase);
    save_vocabulary(vocab, options.out_dir + "/" + kVocabName);

    const Corpus corpus1 =
        corpus_from_lines(raw1.lines, vocab, StyleLabel::s1, options.lowercase);
    const Corpus corpus2 =
        corpus_from_lines(raw2.lines, vocab, StyleLabel::s2, options.lowercase);

    std::uint64_t state = options.config.seed;
    const std::uint64_t split_seed1 = splitmix64(state);
    const std::uint64_t split_seed2 = splitmix64(state);
    const auto buckets1 = split_indices(corpus1.sentences.size(), options.split, split_seed1);
    const auto buckets2 = split_indices(corpus2.sentences.size(), options.split, split_seed2);
    for (std::size_t b = 0; b < options.split.size(); ++b) {
      write_lines(options.out_dir + "/" + split_file_name(StyleLabel::s1, b),
                  gather(raw1.lines, buckets1[b]));
      write_lines(options.out_dir + "/" + split_file_name(StyleLabel::s2, b),
                  gather(raw2.lines, buckets2[b]));
    }

    const Corpus train1 = bucket_corpus(corpus1, buckets1[0]);
    const Corpus train2 = bucket_corpus(corpus2, buckets2[0]);
    const Corpus valid1 = bucket_corpus(corpus1, buckets1[1]);
    const Corpus valid2 = bucket_corpus(corpus2, buckets2[1]);
    for (const Corpus* c : {&train1, &train2, &valid1, &valid2}) {
      if (c->sentences.empty()) {
        throw ConfigError(std::string("the split leaves a ") + style_name(c->style_label) +
                          " bucket empty; use more data or different fractions");
      }
    }

    err << "loaded " << corpus1.sentences.size() << " style1 and " << corpus2.sentences.size()
        << " style2 sentences; vocabulary " << vocab.size() << " tokens\n";
    out << "vocab_size=" << vocab.size() << " train1=" << train1.sentences.size()
        << " train2=" << train2.sentences.size() << " valid1=" << valid1.sentences.size()
        << " valid2=" << valid2.sentences.size() << "\n";

    TrainConfig config = options.config;
    config.checkpoint_dir = options.out_dir;
    const TrainResult result = train(train1, train2, valid1, valid2, vocab, config);

    std::vector<std::string> metric_lines;
    metric_lines.reserve(result.log.steps.size());
    for (const StepRecord& record : result.log.steps) metric_lines.push_back(metrics_line(record));
    write_lines(options.out_dir + "/" + kMetricsName, metric_lines);

    for (std::size_t epoch = 0; epoch < result.log.validation_recon.size(); ++epoch) {
      out << "epoch=" << epoch << " validation_recon=" << g17(result.log.validation_recon[epoch])
          << "\n";
    }
    out << "best_epoch=" << result.log.best_epoch
        << " best_validation_recon=" << g17(result.log.best_validation_recon)
        << " steps=" << result.log.steps.size() << " checkpoint=" << options.out_dir << "/"
        << kCheckpointName << "\n";
    return kExitOk;
  });
}

// ==== transfer ====

int run_transfer(const TransferOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    Direction direction = Direction::s1_to_s2;
    if (options.direction == "2to1") {
      direction = Direction::s2_to_s1;
    } else if (options.direction != "1to2") {
      throw ConfigError("--direction must be 1to2 or 2to1, got '" + options.direction + "'");
    }
    if (options.max_len == 0) throw ConfigError("--max-len must be positive");
    if (options.output_file.empty()) throw ConfigError("transfer needs --output");

    const Vocabulary vocab = load_vocabulary(options.vocab_file);
    const CaeModel model = load_checkpoint(options.checkpoint_file, vocab);
    const std::vector<std::string> lines = split_lines(read_file_bytes(options.input_file));

    std::ofstream output(options.output_file, std::ios::binary | std::ios::trunc);
    if (!output) throw IoError("cannot open " + options.output_file + " for writing");
    std::size_t transferred = 0;
    for (const std::string& line : lines) {
      const std::vector<std::string> tokens = split_tokens(line, options.lowercase);
      if (tokens.empty()) {  // empty lines pass through so output stays line-aligned
        output << '\n';
        continue;
      }
      const TransferResult result =
          transfer_text(model, ids_for(tokens, vocab), direction, options.max_len);
      output << transferred_sentence(result, vocab) << '\n';
      ++transferred;
    }
    output.flush();
    if (!output) throw IoError("failed while writing " + options.output_file);

    out << "lines=" << lines.size() << " transferred=" << transferred
        << " direction=" << options.direction << "\n";
    return kExitOk;
  });
}

// ==== evaluate ====

EvalReport evaluate_files(const EvaluateOptions& options) {
  StyleLabel target = StyleLabel::s2;
  if (options.target_style == "1") {
    target = StyleLabel::s1;
  } else if (options.target_style != "2") {
    throw ConfigError("--target-style must be 1 or 2, got '" + options.target_style + "'");
  }
  if (!(options.lm_heldout_fraction > 0.0) || !(options.lm_heldout_fraction < 1.0)) {
    throw ConfigError("--lm-heldout-fraction must lie strictly between 0 and 1");
  }

  const std::vector<std::string> source_lines = split_lines(read_file_bytes(options.source_file));
  const std::vector<std::string> output_lines =
      split_lines(read_file_bytes(options.transferred_file));
  if (source_lines.size() != output_lines.size()) {
    throw ContractError("source and transferred files must be line-aligned: " +
                        std::to_string(source_lines.size()) + " vs " +
                        std::to_string(output_lines.size()) + " lines");
  }

  const LoadedCorpus raw1 = load_lines(options.style1_file, options.lowercase);
  const LoadedCorpus raw2 = load_lines(options.style2_file, options.lowercase);
  std::vector<std::string> vocab_lines = raw1.all_lines;
  vocab_lines.insert(vocab_lines.end(), raw2.all_lines.begin(), raw2.all_lines.end());
  const Vocabulary vocab =
      build_vocabulary_from_lines(vocab_lines, options.vocab_max_size, options.lowercase);
  const Corpus corpus1 = corpus_from_lines(raw1.lines, vocab, StyleLabel::s1, options.lowercase);
  const Corpus corpus2 = corpus_from_lines(raw2.lines, vocab, StyleLabel::s2, options.lowercase);

  // Pairs with an empty source line carry nothing to score against; empty
  // outputs stay (they are a model behaviour the metrics must see).
  std::vector<std::size_t> kept;
  std::vector<std::vector<int>> source_ids;
  std::vector<std::vector<int>> output_ids;
  for (std::size_t i = 0; i < source_lines.size(); ++i) {
    const auto source_tokens = split_tokens(source_lines[i], options.lowercase);
    if (source_tokens.empty()) continue;
    kept.push_back(i);
    source_ids.push_back(ids_for(source_tokens, vocab));
    output_ids.push_back(ids_for(split_tokens(output_lines[i], options.lowercase), vocab));
  }
  if (kept.empty()) throw ContractError("every source line is empty; nothing to score");

  std::uint64_t state = options.seed;
  const std::uint64_t classifier_seed = splitmix64(state);
  const std::uint64_t split_seed = splitmix64(state);
  const std::uint64_t lm_seed = splitmix64(state);
  const std::uint64_t rppl_seed = splitmix64(state);

  const StyleClassifier judge =
      train_classifier(corpus1, corpus2, options.classifier, classifier_seed);

  const Corpus& target_corpus = target == StyleLabel::s2 ? corpus2 : corpus1;
  const auto lm_buckets =
      split_indices(target_corpus.sentences.size(),
                    {1.0 - options.lm_heldout_fraction, options.lm_heldout_fraction}, split_seed);
  std::vector<std::vector<int>> lm_train = gather(target_corpus.sentences, lm_buckets[0]);
  std::vector<std::vector<int>> lm_heldout = gather(target_corpus.sentences, lm_buckets[1]);
  if (lm_train.empty()) lm_train = target_corpus.sentences;
  if (lm_heldout.empty()) lm_heldout = target_corpus.sentences;

  const LanguageModel lm = train_lm(lm_train, vocab.size(), options.lm, lm_seed);

  EvalReport report;
  report.transfer_rate = transfer_rate(judge, output_ids, target);
  report.bleu = corpus_bleu(output_ids, source_ids);
  report.ppl = perplexity(lm, output_ids);
  report.rppl = reverse_perplexity(output_ids, lm_heldout, vocab.size(), options.lm, rppl_seed);
  report.classifier_heldout_accuracy = judge.heldout_accuracy;

  double bleu_sum = 0.0;
  report.records.reserve(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    SentenceRecord record;
    record.source = source_lines[kept[k]];
    record.output = output_lines[kept[k]];
    record.classifier_score = classifier_score(judge, output_ids[k]);
    record.sentence_bleu = bleu(output_ids[k], source_ids[k]);
    bleu_sum += record.sentence_bleu;
    report.records.push_back(std::move(record));
  }
  report.bleu_sentence_mean = bleu_sum / static_cast<double>(kept.size());
  return report;
}

namespace {

std::string report_summary(const EvalReport& report) {
  return "transfer_rate=" + g17(report.transfer_rate) + " bleu=" + g17(report.bleu) +
         " bleu_sentence_mean=" + g17(report.bleu_sentence_mean) + " ppl=" + g17(report.ppl) +
         " rppl=" + g17(report.rppl) +
         " classifier_heldout_accuracy=" + g17(report.classifier_heldout_accuracy);
}

}  // namespace

int run_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (options.report_file.empty()) throw ConfigError("evaluate needs --report");
    const EvalReport report = evaluate_files(options);
    write_eval_report(report, options.report_file);
    out << report_summary(report) << " records=" << report.records.size()
        << " report=" << options.report_file << "\n";
    return kExitOk;
  });
}

// ==== ablate ====

int run_ablate(const AblateOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (options.train.split.size() != 3) {
      throw ConfigError("ablate needs a three-way split so a test bucket exists");
    }
    if (options.train.out_dir.empty()) throw ConfigError("--out must not be empty");
    ensure_directory(options.train.out_dir);

    struct Variant {
      const char* name;
      bool no_cycle;
      bool no_discriminators;
    };
    const Variant variants[] = {
        {"full", false, false},
        {"no_cycle", true, false},
        {"no_discriminators", false, true},
    };

    std::vector<std::string> summary;
    for (const Variant& variant : variants) {
      const std::string dir = options.train.out_dir + "/" + variant.name;
      err << "=== variant " << variant.name << " ===\n";

      TrainOptions train_options = options.train;
      train_options.out_dir = dir;
      train_options.config.no_cycle = variant.no_cycle;
      train_options.config.no_discriminators = variant.no_discriminators;
      // Nested commands report progress on stderr so stdout stays a summary.
      if (const int rc = run_train(train_options, err, err); rc != kExitOk) return rc;

      TransferOptions transfer_options;
      transfer_options.checkpoint_file = dir + "/" + kCheckpointName;
      transfer_options.vocab_file = dir + "/" + kVocabName;
      transfer_options.input_file = dir + "/" + split_file_name(StyleLabel::s1, 2);
      transfer_options.output_file = dir + "/transferred.txt";
      transfer_options.direction = "1to2";
      transfer_options.max_len = options.max_len;
      transfer_options.lowercase = options.train.lowercase;
      if (const int rc = run_transfer(transfer_options, err, err); rc != kExitOk) return rc;

      EvaluateOptions eval_options = options.eval;
      eval_options.source_file = transfer_options.input_file;
      eval_options.transferred_file = transfer_options.output_file;
      eval_options.style1_file = options.train.style1_file;
      eval_options.style2_file = options.train.style2_file;
      eval_options.target_style = "2";
      eval_options.lowercase = options.train.lowercase;
      eval_options.vocab_max_size = options.train.config.vocab_max_size;
      eval_options.report_file = dir + "/eval_report.txt";
      const EvalReport report = evaluate_files(eval_options);
      write_eval_report(report, eval_options.report_file);

      summary.push_back(std::string("variant=") + variant.name + " " + report_summary(report));
    }

    write_lines(options.train.out_dir + "/ablation_summary.txt", summary);
    for (const std::string& row : summary) out << row << "\n";
    return kExitOk;
  });
}

}  // namespace cae
