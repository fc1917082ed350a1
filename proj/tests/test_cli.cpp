#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cae/cli.hpp"
#include "cae/evaluation.hpp"
#include "cae/language_model.hpp"
#include "cae/tensor.hpp"
#include "cae/text_data.hpp"
#include "doctest.h"

#ifdef CAE_CLI_PATH
#include <sys/wait.h>
#endif

using namespace cae;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: ", path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  REQUIRE(out.good());
}

std::vector<std::string> lines_of(const std::string& bytes) {
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

// Shared content words plus three style-exclusive marker words per side, as
// raw text files: enough signal for every judge at toy scale.
std::string marker_text(StyleLabel label, std::size_t count, std::uint64_t seed) {
  static const char* kContent[12] = {"alpha", "bravo", "china", "delta", "echo",  "fox",
                                     "golf",  "hotel", "india", "jazz",  "kilo", "lima"};
  static const char* kS1[3] = {"whisper", "murmur", "hush"};
  static const char* kS2[3] = {"shout", "roar", "blare"};
  std::uint64_t state = seed;
  std::ostringstream out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = 3 + splitmix64(state) % 3;
    for (std::size_t j = 0; j < len; ++j) out << kContent[splitmix64(state) % 12] << ' ';
    const std::size_t pick = splitmix64(state) % 3;
    out << (label == StyleLabel::s1 ? kS1[pick] : kS2[pick]) << '\n';
  }
  return out.str();
}

// Swap each style-1 marker for its style-2 twin: an idealized transfer used
// to feed the evaluation path with known-good outputs.
std::string swap_markers(const std::string& text) {
  static const std::map<std::string, std::string> kSwap = {
      {"whisper", "shout"}, {"murmur", "roar"}, {"hush", "blare"}};
  std::ostringstream out;
  for (const std::string& line : lines_of(text)) {
    const std::vector<std::string> tokens = split_tokens(line);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto hit = kSwap.find(tokens[i]);
      out << (hit == kSwap.end() ? tokens[i] : hit->second);
      out << (i + 1 == tokens.size() ? '\n' : ' ');
    }
    if (tokens.empty()) out << '\n';
  }
  return out.str();
}

std::vector<std::vector<int>> encode_lines(const std::vector<std::string>& lines,
                                           const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  for (const std::string& line : lines) {
    const std::vector<std::string> tokens = split_tokens(line);
    if (tokens.empty()) continue;
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& token : tokens) ids.push_back(vocab.id_of(token));
    out.push_back(std::move(ids));
  }
  return out;
}

std::map<std::string, std::string> parse_keys(const std::string& text) {
  std::map<std::string, std::string> out;
  for (const std::string& line : lines_of(text)) {
    if (line.find('\t') != std::string::npos) continue;  // per-sentence record rows
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq != std::string::npos) out[field.substr(0, eq)] = field.substr(eq + 1);
    }
  }
  return out;
}

TrainOptions tiny_train_options(const fs::path& dir) {
  TrainOptions options;
  options.style1_file = (dir / "style1.txt").string();
  options.style2_file = (dir / "style2.txt").string();
  options.out_dir = (dir / "run").string();
  options.config.hidden = 4;
  options.config.epochs = 2;
  options.config.batch_size = 8;
  options.config.max_len = 8;
  options.config.vocab_max_size = 64;
  options.config.seed = 5;
  return options;
}

}  // namespace

// ==== exit codes ====

TEST_CASE("cli exit codes follow the error taxonomy") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(ContractError("x")) == kExitConfig);
  CHECK(exit_code_for(DimensionError("x")) == kExitConfig);
  CHECK(exit_code_for(DomainError("x")) == kExitConfig);
  CHECK(exit_code_for(IndexError("x")) == kExitConfig);
  CHECK(exit_code_for(DegenerateInputError("x")) == kExitConfig);
  CHECK(exit_code_for(IoError("x")) == kExitIo);
  CHECK(exit_code_for(TrainingDivergenceError("x", 3)) == kExitDivergence);

  const fs::path dir = scratch_dir("exit_codes");
  spit(dir / "style1.txt", marker_text(StyleLabel::s1, 40, 1));
  spit(dir / "style2.txt", marker_text(StyleLabel::s2, 40, 2));
  std::ostringstream out, err;

  TrainOptions missing = tiny_train_options(dir);
  missing.style1_file = (dir / "nope.txt").string();
  CHECK(run_train(missing, out, err) == kExitIo);

  TrainOptions bad_lambda = tiny_train_options(dir);
  bad_lambda.config.lambda1 = -1.0;
  CHECK(run_train(bad_lambda, out, err) == kExitConfig);

  TrainOptions bad_split = tiny_train_options(dir);
  bad_split.split = {0.5, 0.2, 0.2};
  CHECK(run_train(bad_split, out, err) == kExitConfig);
  bad_split.split = {1.0};
  CHECK(run_train(bad_split, out, err) == kExitConfig);

  TransferOptions transfer;
  transfer.checkpoint_file = (dir / "nope.ckpt").string();
  transfer.vocab_file = (dir / "nope_vocab.txt").string();
  transfer.input_file = (dir / "style1.txt").string();
  transfer.output_file = (dir / "out.txt").string();
  CHECK(run_transfer(transfer, out, err) == kExitIo);
  transfer.direction = "sideways";
  CHECK(run_transfer(transfer, out, err) == kExitConfig);

  CHECK(err.str().find("error:") != std::string::npos);
}

// ==== train ====

TEST_CASE("train lays out a complete deterministic run directory") {
  const fs::path dir = scratch_dir("train_run");
  const std::string text1 = marker_text(StyleLabel::s1, 40, 11);
  const std::string text2 = marker_text(StyleLabel::s2, 40, 12);
  spit(dir / "style1.txt", text1);
  spit(dir / "style2.txt", text2);
  const TrainOptions options = tiny_train_options(dir);

  std::ostringstream out, err;
  REQUIRE(run_train(options, out, err) == kExitOk);

  const fs::path run = options.out_dir;
  std::vector<fs::path> artifacts = {run / kManifestName, run / kVocabName, run / kCheckpointName,
                                     run / kMetricsName};
  for (StyleLabel label : {StyleLabel::s1, StyleLabel::s2}) {
    for (std::size_t bucket = 0; bucket < 3; ++bucket) {
      artifacts.push_back(run / split_file_name(label, bucket));
    }
  }
  for (const fs::path& artifact : artifacts) {
    CHECK_MESSAGE(fs::exists(artifact), "missing artifact ", artifact.string());
  }

  // the manifest records the resolved run: version, seed, hashes, artifacts
  const std::string manifest = slurp(run / kManifestName);
  auto keys = parse_keys(manifest);
  CHECK(keys["tool_version"] == kToolVersion);
  CHECK(keys["seed"] == "5");
  CHECK(keys["hidden"] == "4");
  CHECK(keys["split"] == "0.69999999999999996,0.10000000000000001,0.20000000000000001");
  char expected_hash[32];
  std::snprintf(expected_hash, sizeof(expected_hash), "%016llx",
                static_cast<unsigned long long>(file_hash(options.style1_file)));
  CHECK(keys["style1_hash"] == expected_hash);
  CHECK(keys["artifact_checkpoint"] == options.out_dir + "/" + kCheckpointName);

  // the three split files partition the corpus exactly
  for (StyleLabel label : {StyleLabel::s1, StyleLabel::s2}) {
    std::vector<std::string> recovered;
    for (std::size_t bucket = 0; bucket < 3; ++bucket) {
      for (const std::string& line : lines_of(slurp(run / split_file_name(label, bucket)))) {
        recovered.push_back(line);
      }
    }
    std::vector<std::string> original = lines_of(label == StyleLabel::s1 ? text1 : text2);
    std::sort(recovered.begin(), recovered.end());
    std::sort(original.begin(), original.end());
    CHECK(recovered == original);
  }

  // stdout carries key=value records only
  CHECK(out.str().find("epoch=0 validation_recon=") != std::string::npos);
  CHECK(out.str().find("best_epoch=") != std::string::npos);
  for (const std::string& line : lines_of(out.str())) {
    std::istringstream fields(line);
    std::string field;
    while (fields >> field) {
      CHECK_MESSAGE(field.find('=') != std::string::npos, "stray stdout field: ", field);
    }
  }

  const std::string metrics = slurp(run / kMetricsName);
  REQUIRE(!metrics.empty());
  CHECK(metrics.rfind("step=0 ", 0) == 0);
  CHECK(lines_of(metrics).size() >= options.config.epochs);

  // re-running the identical manifest reproduces every artifact bitwise
  std::vector<std::string> before;
  for (const fs::path& artifact : artifacts) before.push_back(slurp(artifact));
  std::ostringstream out2, err2;
  REQUIRE(run_train(options, out2, err2) == kExitOk);
  for (std::size_t i = 0; i < artifacts.size(); ++i) {
    CHECK_MESSAGE(slurp(artifacts[i]) == before[i], "artifact changed across identical runs: ",
                  artifacts[i].string());
  }
  CHECK(out2.str() == out.str());
}

// ==== transfer ====

TEST_CASE("transfer writes line-aligned rewrites and empty lines pass through") {
  const fs::path dir = scratch_dir("transfer_run");
  spit(dir / "style1.txt", marker_text(StyleLabel::s1, 40, 21));
  spit(dir / "style2.txt", marker_text(StyleLabel::s2, 40, 22));
  const TrainOptions train_options = tiny_train_options(dir);
  std::ostringstream out, err;
  REQUIRE(run_train(train_options, out, err) == kExitOk);

  TransferOptions options;
  options.checkpoint_file = train_options.out_dir + "/" + kCheckpointName;
  options.vocab_file = train_options.out_dir + "/" + kVocabName;
  options.input_file = (dir / "input.txt").string();
  options.output_file = (dir / "output.txt").string();
  options.max_len = 8;

  spit(dir / "input.txt", "alpha bravo whisper\n\nunseenword china hush\n");
  std::ostringstream tout;
  REQUIRE(run_transfer(options, tout, err) == kExitOk);
  const std::vector<std::string> produced = lines_of(slurp(dir / "output.txt"));
  REQUIRE(produced.size() == 3);
  CHECK(!produced[0].empty());
  CHECK(produced[1].empty());  // empty input line passes through
  CHECK(!produced[2].empty());
  CHECK(tout.str().find("lines=3 transferred=2") != std::string::npos);

  SUBCASE("same input gives bitwise identical output") {
    const std::string first = slurp(dir / "output.txt");
    std::ostringstream again;
    REQUIRE(run_transfer(options, again, err) == kExitOk);
    CHECK(slurp(dir / "output.txt") == first);
  }

  SUBCASE("the reverse direction also decodes") {
    options.direction = "2to1";
    options.output_file = (dir / "output_back.txt").string();
    REQUIRE(run_transfer(options, tout, err) == kExitOk);
    CHECK(lines_of(slurp(options.output_file)).size() == 3);
  }

  SUBCASE("an empty input file yields an empty output file") {
    spit(dir / "empty.txt", "");
    options.input_file = (dir / "empty.txt").string();
    options.output_file = (dir / "empty_out.txt").string();
    REQUIRE(run_transfer(options, tout, err) == kExitOk);
    CHECK(slurp(dir / "empty_out.txt").empty());
  }

  SUBCASE("a vocabulary from another run is rejected as configuration error") {
    const Vocabulary other = build_vocabulary_from_lines({"zz yy xx"}, 16);
    save_vocabulary(other, (dir / "other_vocab.txt").string());
    options.vocab_file = (dir / "other_vocab.txt").string();
    CHECK(run_transfer(options, tout, err) == kExitConfig);
  }

  SUBCASE("a zero decoding budget is rejected") {
    options.max_len = 0;
    CHECK(run_transfer(options, tout, err) == kExitConfig);
  }
}

// ==== evaluate ====

TEST_CASE("evaluate reports exactly the metrics the library computes") {
  const fs::path dir = scratch_dir("evaluate_run");
  const std::string style1 = marker_text(StyleLabel::s1, 600, 31);
  const std::string style2 = marker_text(StyleLabel::s2, 600, 32);
  spit(dir / "style1.txt", style1);
  spit(dir / "style2.txt", style2);

  // 1001 lines with one empty passthrough pair; the rest are marker swaps
  std::string source = marker_text(StyleLabel::s1, 1000, 33);
  std::vector<std::string> source_lines = lines_of(source);
  source_lines.insert(source_lines.begin() + 500, "");
  std::string source_text;
  for (const std::string& line : source_lines) source_text += line + "\n";
  const std::string transferred_text = swap_markers(source_text);
  spit(dir / "source.txt", source_text);
  spit(dir / "transferred.txt", transferred_text);

  EvaluateOptions options;
  options.source_file = (dir / "source.txt").string();
  options.transferred_file = (dir / "transferred.txt").string();
  options.style1_file = (dir / "style1.txt").string();
  options.style2_file = (dir / "style2.txt").string();
  options.report_file = (dir / "report.txt").string();
  options.seed = 11;
  options.classifier.embedding_dim = 6;
  options.classifier.epochs = 6;
  options.lm.embedding = 8;
  options.lm.hidden = 8;
  options.lm.epochs = 2;

  std::ostringstream out, err;
  REQUIRE(run_evaluate(options, out, err) == kExitOk);
  const std::string report = slurp(dir / "report.txt");
  auto keys = parse_keys(report);
  CHECK(keys["records"] == "1000");  // the empty pair is skipped
  CHECK(out.str().find("transfer_rate=") != std::string::npos);

  // rebuild the same judges directly from the library and compare exactly
  std::uint64_t state = options.seed;
  const std::uint64_t classifier_seed = splitmix64(state);
  const std::uint64_t split_seed = splitmix64(state);
  const std::uint64_t lm_seed = splitmix64(state);
  const std::uint64_t rppl_seed = splitmix64(state);

  std::vector<std::string> vocab_lines = lines_of(style1);
  for (const std::string& line : lines_of(style2)) vocab_lines.push_back(line);
  const Vocabulary vocab = build_vocabulary_from_lines(vocab_lines, options.vocab_max_size);
  const Corpus corpus1 = corpus_from_lines(lines_of(style1), vocab, StyleLabel::s1);
  const Corpus corpus2 = corpus_from_lines(lines_of(style2), vocab, StyleLabel::s2);
  const auto source_ids = encode_lines(source_lines, vocab);
  const auto output_ids = encode_lines(lines_of(transferred_text), vocab);
  REQUIRE(source_ids.size() == 1000);

  const StyleClassifier judge =
      train_classifier(corpus1, corpus2, options.classifier, classifier_seed);
  const auto buckets = split_indices(corpus2.sentences.size(), {0.8, 0.2}, split_seed);
  std::vector<std::vector<int>> lm_train, lm_heldout;
  for (std::size_t i : buckets[0]) lm_train.push_back(corpus2.sentences[i]);
  for (std::size_t i : buckets[1]) lm_heldout.push_back(corpus2.sentences[i]);
  const LanguageModel lm = train_lm(lm_train, vocab.size(), options.lm, lm_seed);

  const double want_rate = transfer_rate(judge, output_ids, StyleLabel::s2);
  const double want_bleu = corpus_bleu(output_ids, source_ids);
  const double want_ppl = perplexity(lm, output_ids);
  const double want_rppl =
      reverse_perplexity(output_ids, lm_heldout, vocab.size(), options.lm, rppl_seed);

  CHECK(std::stod(keys["transfer_rate"]) == want_rate);
  CHECK(std::stod(keys["bleu"]) == want_bleu);
  CHECK(std::stod(keys["ppl"]) == want_ppl);
  CHECK(std::stod(keys["rppl"]) == want_rppl);
  CHECK(std::stod(keys["classifier_heldout_accuracy"]) == judge.heldout_accuracy);

  // marker swaps should convince the style judge while staying close in BLEU
  CHECK(want_rate > 0.8);
  CHECK(want_bleu > 30.0);

  SUBCASE("misaligned files are rejected") {
    spit(dir / "short.txt", "alpha shout\n");
    options.transferred_file = (dir / "short.txt").string();
    std::ostringstream out2, err2;
    CHECK(run_evaluate(options, out2, err2) == kExitConfig);
  }
}

// ==== ablate ====

TEST_CASE("ablate trains and scores all three variants into one summary") {
  const fs::path dir = scratch_dir("ablate_run");
  spit(dir / "style1.txt", marker_text(StyleLabel::s1, 5000, 41));
  spit(dir / "style2.txt", marker_text(StyleLabel::s2, 5000, 42));

  AblateOptions options;
  options.train = tiny_train_options(dir);
  options.train.config.epochs = 1;
  options.train.config.batch_size = 64;
  options.train.config.seed = 7;
  options.max_len = 8;
  options.eval.seed = 9;
  options.eval.classifier.embedding_dim = 6;
  options.eval.classifier.epochs = 3;
  options.eval.classifier.batch_size = 128;
  options.eval.lm.embedding = 8;
  options.eval.lm.hidden = 8;
  options.eval.lm.epochs = 1;
  options.eval.lm.batch_size = 128;

  std::ostringstream out, err;
  REQUIRE_MESSAGE(run_ablate(options, out, err) == kExitOk, err.str());

  const std::vector<std::string> summary =
      lines_of(slurp(fs::path(options.train.out_dir) / "ablation_summary.txt"));
  REQUIRE(summary.size() == 3);
  CHECK(summary[0].rfind("variant=full ", 0) == 0);
  CHECK(summary[1].rfind("variant=no_cycle ", 0) == 0);
  CHECK(summary[2].rfind("variant=no_discriminators ", 0) == 0);
  CHECK(out.str().find(summary[0]) != std::string::npos);

  for (const char* variant : {"full", "no_cycle", "no_discriminators"}) {
    const fs::path vdir = fs::path(options.train.out_dir) / variant;
    for (const char* artifact : {"manifest.txt", "vocab.txt", "best.ckpt", "metrics.txt",
                                 "transferred.txt", "eval_report.txt"}) {
      CHECK_MESSAGE(fs::exists(vdir / artifact), "missing ", (vdir / artifact).string());
    }
    // the transferred file is line-aligned with the style-1 test bucket
    CHECK(lines_of(slurp(vdir / "transferred.txt")).size() ==
          lines_of(slurp(vdir / split_file_name(StyleLabel::s1, 2))).size());
  }

  for (const std::string& row : summary) {
    auto keys = parse_keys(row + "\n");
    const double rate = std::stod(keys.at("transfer_rate"));
    const double bleu_value = std::stod(keys.at("bleu"));
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
    CHECK(bleu_value >= 0.0);
    CHECK(bleu_value <= 100.0);
    CHECK(std::isfinite(std::stod(keys.at("ppl"))));
    CHECK(std::isfinite(std::stod(keys.at("rppl"))));
  }

  // the ablation flags actually reached the manifests
  CHECK(parse_keys(slurp(fs::path(options.train.out_dir) / "full" / kManifestName))
            .at("no_cycle") == "0");
  CHECK(parse_keys(slurp(fs::path(options.train.out_dir) / "no_cycle" / kManifestName))
            .at("no_cycle") == "1");
  CHECK(parse_keys(
            slurp(fs::path(options.train.out_dir) / "no_discriminators" / kManifestName))
            .at("no_discriminators") == "1");
}

// ==== the installed binary ====

#ifdef CAE_CLI_PATH
namespace {

int run_binary(const std::string& args) {
  const std::string command = std::string(CAE_CLI_PATH) + " " + args;
  const int raw = std::system(command.c_str());
  REQUIRE(raw != -1);
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

}  // namespace

TEST_CASE("the command line binary parses flags and config files") {
  const fs::path dir = scratch_dir("binary_run");
  spit(dir / "style1.txt", marker_text(StyleLabel::s1, 40, 51));
  spit(dir / "style2.txt", marker_text(StyleLabel::s2, 40, 52));
  const std::string quiet = " > " + (dir / "stdout.txt").string() + " 2> " +
                            (dir / "stderr.txt").string();

  CHECK(run_binary("--version" + quiet) == kExitOk);
  CHECK(run_binary("--help" + quiet) == kExitOk);
  CHECK(run_binary("train --no-such-flag" + quiet) == kExitConfig);
  CHECK(run_binary("train" + quiet) == kExitConfig);  // missing required options
  CHECK(run_binary("frobnicate" + quiet) == kExitConfig);

  // config file sets defaults; explicit flags override it
  spit(dir / "run.cfg",
       "hidden=4\nepochs=1\nbatch-size=8\nmax-len=8\nvocab-max-size=64\nseed=3\n");
  const std::string common = "train --config " + (dir / "run.cfg").string() +
                             " --style1-file " + (dir / "style1.txt").string() +
                             " --style2-file " + (dir / "style2.txt").string();
  CHECK(run_binary(common + " --out " + (dir / "run_a").string() + quiet) == kExitOk);
  auto keys_a = parse_keys(slurp(dir / "run_a" / kManifestName));
  CHECK(keys_a["hidden"] == "4");
  CHECK(keys_a["epochs"] == "1");
  CHECK(keys_a["seed"] == "3");

  CHECK(run_binary(common + " --hidden 5 --out " + (dir / "run_b").string() + quiet) == kExitOk);
  auto keys_b = parse_keys(slurp(dir / "run_b" / kManifestName));
  CHECK(keys_b["hidden"] == "5");

  // a full pipeline through the binary: train -> transfer -> stdout records
  const std::string run_dir = (dir / "run_a").string();
  spit(dir / "input.txt", "alpha bravo whisper\n");
  CHECK(run_binary("transfer --checkpoint " + run_dir + "/best.ckpt --vocab " + run_dir +
                   "/vocab.txt --input " + (dir / "input.txt").string() + " --output " +
                   (dir / "out.txt").string() + " --max-len 8" + quiet) == kExitOk);
  CHECK(lines_of(slurp(dir / "out.txt")).size() == 1);
  CHECK(slurp(dir / "stdout.txt").find("lines=1 transferred=1") != std::string::npos);

  // a file that is not a checkpoint fails with the I/O exit code
  CHECK(run_binary("transfer --checkpoint " + run_dir + "/manifest.txt --vocab " + run_dir +
                   "/vocab.txt --input " + (dir / "input.txt").string() + " --output " +
                   (dir / "out2.txt").string() + quiet) == kExitIo);
}
#endif
