#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cae/config.hpp"
#include "cae/errors.hpp"
#include "cae/evaluation.hpp"
#include "cae/language_model.hpp"

namespace cae {

// ==== exit codes ====

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // argument parser / unexpected failure
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;

// Configuration and precondition problems map to 2, filesystem and
// serialization failures to 3, non-finite training losses to 4.
int exit_code_for(const Error& error);

// ==== shared plumbing ====

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a over the raw bytes of a file; recorded in run manifests so a run is
// tied to the exact corpus contents it saw.
std::uint64_t file_hash(const std::string& path);

// Artifact names under a training run's output directory.
inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kVocabName = "vocab.txt";
inline constexpr const char* kCheckpointName = "best.ckpt";
inline constexpr const char* kMetricsName = "metrics.txt";

// "split_style1_train.txt" and friends; bucket is an index into the split
// fractions (0 = train, 1 = valid, 2 = test).
std::string split_file_name(StyleLabel label, std::size_t bucket);

// ==== train ====

struct TrainOptions {
  std::string style1_file;
  std::string style2_file;
  std::string out_dir = "cae-out";
  // Fraction of each corpus per bucket, in order train/valid[/test]. Two or
  // three entries summing to one; every sentence lands in exactly one bucket.
  std::vector<double> split = {0.7, 0.1, 0.2};
  bool lowercase = false;
  TrainConfig config;
};

// Builds the shared vocabulary, splits both corpora with seeded shuffles,
// writes the run manifest before any other artifact, trains, and leaves
// vocab/checkpoint/metrics/split files in `out_dir`. stdout gets one
// key=value record per epoch; stderr gets diagnostics.
int run_train(const TrainOptions& options, std::ostream& out, std::ostream& err);

// ==== transfer ====

struct TransferOptions {
  std::string checkpoint_file;
  std::string vocab_file;
  std::string input_file;
  std::string output_file;
  std::string direction = "1to2";  // or "2to1"
  std::size_t max_len = 20;
  bool lowercase = false;
};

// Rewrites every line of the input in the other style. Output is line-aligned
// with the input; empty input lines pass through as empty output lines.
int run_transfer(const TransferOptions& options, std::ostream& out, std::ostream& err);

// ==== evaluate ====

struct EvaluateOptions {
  std::string source_file;       // lines the transfer started from
  std::string transferred_file;  // line-aligned model outputs
  std::string style1_file;       // real corpora for the judges
  std::string style2_file;
  std::string report_file = "eval_report.txt";
  std::string target_style = "2";  // style the transfer was aimed at
  bool lowercase = false;
  std::size_t vocab_max_size = 10000;
  // Fraction of the real target-style corpus held out from the fluency
  // language model and used as the reference set for the reverse judge.
  double lm_heldout_fraction = 0.2;
  std::uint64_t seed = 1;
  ClassifierConfig classifier;
  LmConfig lm;
};

// Scores a transferred corpus: transfer rate from a freshly trained style
// classifier, corpus/sentence BLEU against the sources, perplexity under a
// language model of the real target style, and reverse perplexity of a model
// trained on the outputs. Deterministic per seed.
EvalReport evaluate_files(const EvaluateOptions& options);

// evaluate_files + report file + the headline metrics on stdout.
int run_evaluate(const EvaluateOptions& options, std::ostream& out, std::ostream& err);

// ==== ablate ====

struct AblateOptions {
  // Template run; each variant trains into `train.out_dir/<variant>` with the
  // same data, seed, and sizes. Requires a three-way split (the style-1 test
  // bucket is what gets transferred and scored).
  TrainOptions train;
  // Judge settings; the file fields are filled in per variant.
  EvaluateOptions eval;
  std::size_t max_len = 20;  // transfer decoding budget
};

// Trains the full model plus the no-cycle and no-discriminators ablations,
// transfers each one's style-1 test split, scores all three with identically
// seeded judges, and writes ablation_summary.txt (one key=value row per
// variant, echoed on stdout).
int run_ablate(const AblateOptions& options, std::ostream& out, std::ostream& err);

}  // namespace cae
