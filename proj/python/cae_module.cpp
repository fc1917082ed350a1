#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cae/cli.hpp"
#include "cae/config.hpp"
#include "cae/errors.hpp"
#include "cae/evaluation.hpp"
#include "cae/inference.hpp"
#include "cae/language_model.hpp"
#include "cae/model.hpp"
#include "cae/text_data.hpp"
#include "cae/trainer.hpp"

namespace py = pybind11;
using namespace cae;

namespace {

Corpus corpus_of(std::vector<std::vector<int>> sentences, StyleLabel label) {
  Corpus corpus;
  corpus.style_label = label;
  corpus.sentences = std::move(sentences);
  return corpus;
}

Direction parse_direction(const std::string& name) {
  if (name == "1to2") return Direction::s1_to_s2;
  if (name == "2to1") return Direction::s2_to_s1;
  throw ConfigError("direction must be \"1to2\" or \"2to1\", got \"" + name + "\"");
}

// Runs one of the stream-based commands with captured stdout/stderr.
template <typename Fn, typename Options>
py::tuple run_captured(Fn fn, const Options& options) {
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = fn(options, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_cae, m) {
  m.doc() = "Cycle-consistent adversarial autoencoders for unsupervised text style transfer";
  m.attr("__version__") = kToolVersion;

  // ==== errors ====

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<DimensionError>(m, "DimensionError", error);
  py::register_exception<DomainError>(m, "DomainError", error);
  py::register_exception<IndexError>(m, "TokenIndexError", error);
  py::register_exception<ContractError>(m, "ContractError", error);
  py::register_exception<ConfigError>(m, "ConfigError", error);
  py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", error);
  py::register_exception<TrainingDivergenceError>(m, "TrainingDivergenceError", error);

  m.attr("EXIT_OK") = kExitOk;
  m.attr("EXIT_USAGE") = kExitUsage;
  m.attr("EXIT_CONFIG") = kExitConfig;
  m.attr("EXIT_IO") = kExitIo;
  m.attr("EXIT_DIVERGENCE") = kExitDivergence;

  // ==== text data ====

  py::enum_<StyleLabel>(m, "StyleLabel")
      .value("s1", StyleLabel::s1)
      .value("s2", StyleLabel::s2);

  py::enum_<Direction>(m, "Direction")
      .value("s1_to_s2", Direction::s1_to_s2)
      .value("s2_to_s1", Direction::s2_to_s1);

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_readonly_static("pad_id", &Vocabulary::pad_id)
      .def_readonly_static("bos_id", &Vocabulary::bos_id)
      .def_readonly_static("eos_id", &Vocabulary::eos_id)
      .def_readonly_static("unk_id", &Vocabulary::unk_id)
      .def_static(
          "build",
          [](const std::vector<std::string>& lines, std::size_t max_size, bool lowercase) {
            return build_vocabulary_from_lines(lines, max_size, lowercase);
          },
          py::arg("lines"), py::arg("max_size"), py::arg("lowercase") = false,
          "Keep the max_size most frequent tokens of the lines; ties break by "
          "first occurrence.")
      .def_static(
          "load", [](const std::string& path) { return load_vocabulary(path); },
          py::arg("path"))
      .def(
          "save",
          [](const Vocabulary& vocab, const std::string& path) { save_vocabulary(vocab, path); },
          py::arg("path"))
      .def("__len__", &Vocabulary::size)
      .def("id_of", &Vocabulary::id_of, py::arg("token"),
           "In-vocabulary id, or unk_id for unknown tokens.")
      .def("token_of", &Vocabulary::token_of, py::arg("id"))
      .def(
          "encode",
          [](const Vocabulary& vocab, const std::string& text, bool lowercase) {
            return encode_sentence(text, vocab, lowercase);
          },
          py::arg("text"), py::arg("lowercase") = false,
          "Token ids for one sentence (no bos/eos); raises DegenerateInputError "
          "on a line with no tokens.")
      .def(
          "decode",
          [](const Vocabulary& vocab, const std::vector<int>& ids) {
            return decode_sentence(ids, vocab);
          },
          py::arg("ids"))
      .def("content_hash", [](const Vocabulary& vocab) { return vocabulary_hash(vocab); },
           "FNV-1a over the token list; checkpoints embed it.");

  m.def("file_hash", &file_hash, py::arg("path"),
        "FNV-1a over the raw bytes of a file, as recorded in run manifests.");

  // ==== configuration ====

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("lambda1", &TrainConfig::lambda1)
      .def_readwrite("lambda2", &TrainConfig::lambda2)
      .def_readwrite("lambda3", &TrainConfig::lambda3)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lr_autoencoder", &TrainConfig::lr_autoencoder)
      .def_readwrite("lr_generator", &TrainConfig::lr_generator)
      .def_readwrite("lr_discriminator", &TrainConfig::lr_discriminator)
      .def_readwrite("disc_steps_per_gen_step", &TrainConfig::disc_steps_per_gen_step)
      .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
      .def_readwrite("max_len", &TrainConfig::max_len)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("no_cycle", &TrainConfig::no_cycle)
      .def_readwrite("no_discriminators", &TrainConfig::no_discriminators)
      .def_readwrite("checkpoint_dir", &TrainConfig::checkpoint_dir)
      .def_readwrite("vocab_max_size", &TrainConfig::vocab_max_size)
      .def_static("yelp_defaults", &TrainConfig::yelp_defaults)
      .def_static("yahoo_defaults", &TrainConfig::yahoo_defaults)
      .def("validate", &TrainConfig::validate);

  py::class_<ClassifierConfig>(m, "ClassifierConfig")
      .def(py::init<>())
      .def_readwrite("embedding_dim", &ClassifierConfig::embedding_dim)
      .def_readwrite("epochs", &ClassifierConfig::epochs)
      .def_readwrite("batch_size", &ClassifierConfig::batch_size)
      .def_readwrite("lr", &ClassifierConfig::lr)
      .def_readwrite("heldout_fraction", &ClassifierConfig::heldout_fraction)
      .def_readwrite("patience", &ClassifierConfig::patience);

  py::class_<LmConfig>(m, "LmConfig")
      .def(py::init<>())
      .def_readwrite("embedding", &LmConfig::embedding)
      .def_readwrite("hidden", &LmConfig::hidden)
      .def_readwrite("dropout", &LmConfig::dropout)
      .def_readwrite("epochs", &LmConfig::epochs)
      .def_readwrite("batch_size", &LmConfig::batch_size)
      .def_readwrite("lr", &LmConfig::lr)
      .def_readwrite("max_len", &LmConfig::max_len);

  // ==== model, training, persistence ====

  py::class_<CaeModel>(m, "Model")
      .def_readonly("hidden", &CaeModel::hidden)
      .def_readonly("vocab", &CaeModel::vocab)
      .def(
          "save",
          [](const CaeModel& model, const Vocabulary& vocab, const std::string& path) {
            save_checkpoint(model, vocab, path);
          },
          py::arg("vocab"), py::arg("path"),
          "Versioned binary checkpoint; load(save(m)) is bitwise exact.")
      .def_static(
          "load",
          [](const std::string& path, const Vocabulary& vocab) {
            return load_checkpoint(path, vocab);
          },
          py::arg("path"), py::arg("vocab"));

  m.def(
      "init_model",
      [](const TrainConfig& config, std::size_t vocab_size, std::uint64_t seed) {
        return init_model(config, vocab_size, seed);
      },
      py::arg("config"), py::arg("vocab_size"), py::arg("seed"),
      "Fresh model, every parameter uniform in [-r, r] with r = 1/sqrt(hidden); "
      "deterministic per seed.");

  py::class_<TrainLog>(m, "TrainLog")
      .def_readonly("best_epoch", &TrainLog::best_epoch)
      .def_readonly("best_validation_recon", &TrainLog::best_validation_recon)
      .def_readonly("validation_recon", &TrainLog::validation_recon)
      .def_property_readonly("num_steps",
                             [](const TrainLog& log) { return log.steps.size(); });

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("log", &TrainResult::log);

  m.def(
      "train",
      [](const std::vector<std::vector<int>>& train1, const std::vector<std::vector<int>>& train2,
         const std::vector<std::vector<int>>& valid1, const std::vector<std::vector<int>>& valid2,
         const Vocabulary& vocab, const TrainConfig& config) {
        Corpus t1 = corpus_of(train1, StyleLabel::s1);
        Corpus t2 = corpus_of(train2, StyleLabel::s2);
        Corpus v1 = corpus_of(valid1, StyleLabel::s1);
        Corpus v2 = corpus_of(valid2, StyleLabel::s2);
        return train(t1, t2, v1, v2, vocab, config);
      },
      py::arg("train1"), py::arg("train2"), py::arg("valid1"), py::arg("valid2"),
      py::arg("vocab"), py::arg("config"), py::call_guard<py::gil_scoped_release>(),
      "Alternating adversarial training on the two id-encoded corpora; keeps "
      "the parameters with the best validation reconstruction.");

  // ==== inference ====

  py::class_<TransferResult>(m, "TransferResult")
      .def_readonly("source_tokens", &TransferResult::source_tokens)
      .def_readonly("transferred_tokens", &TransferResult::transferred_tokens)
      .def_readonly("direction", &TransferResult::direction)
      .def_readonly("latent_cycle_residual", &TransferResult::latent_cycle_residual);

  m.def(
      "transfer_text",
      [](const CaeModel& model, const std::vector<int>& sentence, Direction direction,
         std::size_t max_len) { return transfer_text(model, sentence, direction, max_len); },
      py::arg("model"), py::arg("sentence"), py::arg("direction"), py::arg("max_len") = 20,
      py::call_guard<py::gil_scoped_release>(),
      "Encode with the source style, map the latent, greedily decode with the "
      "target style's decoder.");

  m.def(
      "transferred_sentence",
      [](const TransferResult& result, const Vocabulary& vocab) {
        return transferred_sentence(result, vocab);
      },
      py::arg("result"), py::arg("vocab"),
      "Space-joined surface form with the terminal eos stripped.");

  m.def(
      "transfer_line",
      [](const CaeModel& model, const Vocabulary& vocab, const std::string& line,
         const std::string& direction, std::size_t max_len, bool lowercase) {
        Direction d = parse_direction(direction);
        if (split_tokens(line, lowercase).empty()) return std::string();
        std::vector<int> ids = encode_sentence(line, vocab, lowercase);
        TransferResult result;
        {
          py::gil_scoped_release release;
          result = transfer_text(model, ids, d, max_len);
        }
        return transferred_sentence(result, vocab);
      },
      py::arg("model"), py::arg("vocab"), py::arg("line"), py::arg("direction") = "1to2",
      py::arg("max_len") = 20, py::arg("lowercase") = false,
      "One raw text line rewritten in the other style; empty lines pass "
      "through unchanged.");

  // ==== evaluation ====

  m.def("bleu", &bleu, py::arg("candidate"), py::arg("reference"),
        "Sentence BLEU-4 in [0, 100] with add-one smoothing on orders 2-4.");
  m.def("corpus_bleu", &corpus_bleu, py::arg("candidates"), py::arg("references"),
        py::call_guard<py::gil_scoped_release>());
  m.def("jaccard_distance", &jaccard_distance, py::arg("a"), py::arg("b"));
  m.def(
      "nearest_neighbor_jaccard",
      [](const std::vector<int>& sentence, const std::vector<std::vector<int>>& corpus) {
        JaccardMatch match;
        {
          py::gil_scoped_release release;
          match = nearest_neighbor_jaccard(sentence, corpus);
        }
        return py::make_tuple(match.index, match.distance);
      },
      py::arg("sentence"), py::arg("corpus"),
      "(index, distance) of the corpus sentence closest in token-set Jaccard "
      "distance; ties keep the earliest index.");

  py::class_<StyleClassifier>(m, "StyleClassifier")
      .def_readonly("heldout_accuracy", &StyleClassifier::heldout_accuracy);

  m.def(
      "train_classifier",
      [](const std::vector<std::vector<int>>& style1, const std::vector<std::vector<int>>& style2,
         const ClassifierConfig& config, std::uint64_t seed) {
        Corpus c1 = corpus_of(style1, StyleLabel::s1);
        Corpus c2 = corpus_of(style2, StyleLabel::s2);
        return train_classifier(c1, c2, config, seed);
      },
      py::arg("style1"), py::arg("style2"), py::arg("config") = ClassifierConfig{},
      py::arg("seed") = 1, py::call_guard<py::gil_scoped_release>(),
      "Bag-of-words style judge trained until held-out accuracy plateaus.");

  m.def("classifier_score", &classifier_score, py::arg("classifier"), py::arg("sentence"),
        "P(style s2) for one sentence.");
  m.def("classify", &classify, py::arg("classifier"), py::arg("sentence"));
  m.def("transfer_rate", &transfer_rate, py::arg("classifier"), py::arg("sentences"),
        py::arg("target"), py::call_guard<py::gil_scoped_release>(),
        "Fraction of sentences the classifier assigns to the target style.");

  py::class_<LanguageModel>(m, "LanguageModel")
      .def_readonly("vocab", &LanguageModel::vocab);

  m.def(
      "train_lm",
      [](const std::vector<std::vector<int>>& sentences, std::size_t vocab_size,
         const LmConfig& config, std::uint64_t seed) {
        return train_lm(sentences, vocab_size, config, seed);
      },
      py::arg("sentences"), py::arg("vocab_size"), py::arg("config") = LmConfig{},
      py::arg("seed") = 1, py::call_guard<py::gil_scoped_release>(),
      "One-layer LSTM next-token model, deterministic per seed.");

  m.def("perplexity", &perplexity, py::arg("lm"), py::arg("sentences"),
        py::call_guard<py::gil_scoped_release>(),
        "exp of mean per-token NLL, counting every real token and the "
        "terminal eos.");
  m.def("reverse_perplexity", &reverse_perplexity, py::arg("generated"),
        py::arg("real_heldout"), py::arg("vocab_size"), py::arg("config") = LmConfig{},
        py::arg("seed") = 1, py::call_guard<py::gil_scoped_release>(),
        "Perplexity of real held-out text under a model trained on the "
        "generated set; inflated numbers expose mode collapse.");

  py::class_<SentenceRecord>(m, "SentenceRecord")
      .def_readonly("source", &SentenceRecord::source)
      .def_readonly("output", &SentenceRecord::output)
      .def_readonly("classifier_score", &SentenceRecord::classifier_score)
      .def_readonly("sentence_bleu", &SentenceRecord::sentence_bleu);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("transfer_rate", &EvalReport::transfer_rate)
      .def_readonly("bleu", &EvalReport::bleu)
      .def_readonly("bleu_sentence_mean", &EvalReport::bleu_sentence_mean)
      .def_readonly("ppl", &EvalReport::ppl)
      .def_readonly("rppl", &EvalReport::rppl)
      .def_readonly("classifier_heldout_accuracy", &EvalReport::classifier_heldout_accuracy)
      .def_readonly("records", &EvalReport::records);

  m.def(
      "write_eval_report",
      [](const EvalReport& report, const std::string& path) { write_eval_report(report, path); },
      py::arg("report"), py::arg("path"));

  // ==== file-level commands (mirror the command line tool) ====

  py::class_<TrainOptions>(m, "TrainOptions")
      .def(py::init<>())
      .def_readwrite("style1_file", &TrainOptions::style1_file)
      .def_readwrite("style2_file", &TrainOptions::style2_file)
      .def_readwrite("out_dir", &TrainOptions::out_dir)
      .def_readwrite("split", &TrainOptions::split)
      .def_readwrite("lowercase", &TrainOptions::lowercase)
      .def_readwrite("config", &TrainOptions::config);

  py::class_<TransferOptions>(m, "TransferOptions")
      .def(py::init<>())
      .def_readwrite("checkpoint_file", &TransferOptions::checkpoint_file)
      .def_readwrite("vocab_file", &TransferOptions::vocab_file)
      .def_readwrite("input_file", &TransferOptions::input_file)
      .def_readwrite("output_file", &TransferOptions::output_file)
      .def_readwrite("direction", &TransferOptions::direction)
      .def_readwrite("max_len", &TransferOptions::max_len)
      .def_readwrite("lowercase", &TransferOptions::lowercase);

  py::class_<EvaluateOptions>(m, "EvaluateOptions")
      .def(py::init<>())
      .def_readwrite("source_file", &EvaluateOptions::source_file)
      .def_readwrite("transferred_file", &EvaluateOptions::transferred_file)
      .def_readwrite("style1_file", &EvaluateOptions::style1_file)
      .def_readwrite("style2_file", &EvaluateOptions::style2_file)
      .def_readwrite("report_file", &EvaluateOptions::report_file)
      .def_readwrite("target_style", &EvaluateOptions::target_style)
      .def_readwrite("lowercase", &EvaluateOptions::lowercase)
      .def_readwrite("vocab_max_size", &EvaluateOptions::vocab_max_size)
      .def_readwrite("lm_heldout_fraction", &EvaluateOptions::lm_heldout_fraction)
      .def_readwrite("seed", &EvaluateOptions::seed)
      .def_readwrite("classifier", &EvaluateOptions::classifier)
      .def_readwrite("lm", &EvaluateOptions::lm);

  py::class_<AblateOptions>(m, "AblateOptions")
      .def(py::init<>())
      .def_readwrite("train", &AblateOptions::train)
      .def_readwrite("eval", &AblateOptions::eval)
      .def_readwrite("max_len", &AblateOptions::max_len);

  m.def(
      "run_train",
      [](const TrainOptions& options) {
        return run_captured(
            [](const TrainOptions& o, std::ostream& out, std::ostream& err) {
              return run_train(o, out, err);
            },
            options);
      },
      py::arg("options"),
      "Full training run into options.out_dir (manifest, vocab, splits, "
      "checkpoint, metrics); returns (exit_code, stdout, stderr).");

  m.def(
      "run_transfer",
      [](const TransferOptions& options) {
        return run_captured(
            [](const TransferOptions& o, std::ostream& out, std::ostream& err) {
              return run_transfer(o, out, err);
            },
            options);
      },
      py::arg("options"),
      "Line-aligned file rewrite; returns (exit_code, stdout, stderr).");

  m.def(
      "run_evaluate",
      [](const EvaluateOptions& options) {
        return run_captured(
            [](const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
              return run_evaluate(o, out, err);
            },
            options);
      },
      py::arg("options"),
      "Scores a transferred corpus and writes the report file; returns "
      "(exit_code, stdout, stderr).");

  m.def(
      "run_ablate",
      [](const AblateOptions& options) {
        return run_captured(
            [](const AblateOptions& o, std::ostream& out, std::ostream& err) {
              return run_ablate(o, out, err);
            },
            options);
      },
      py::arg("options"),
      "Trains and scores full / no-cycle / no-discriminators variants; "
      "returns (exit_code, stdout, stderr).");

  m.def("evaluate_files", &evaluate_files, py::arg("options"),
        py::call_guard<py::gil_scoped_release>(),
        "The evaluate command as a library call returning the report object.");
}
