// Command line front end: train / transfer / evaluate / ablate subcommands
// over the library entry points in cae/cli.hpp.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cae/cli.hpp"

namespace {

std::string trimmed(const std::string& text) {
  const auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

// Applies `--config <file>` by appending each key=value line as a trailing
// `--key=value` argument unless that flag was given explicitly, so the
// command line always wins over the file.
std::vector<std::string> with_config_defaults(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  std::vector<std::string> cleaned;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw cae::ConfigError("--config needs a file path");
      config_path = args[++i];
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      continue;
    }
    cleaned.push_back(args[i]);
  }
  if (config_path.empty()) return cleaned;

  std::ifstream in(config_path);
  if (!in) throw cae::IoError("cannot open config file " + config_path);
  const auto given = [&cleaned](const std::string& flag) {
    for (const std::string& arg : cleaned) {
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trimmed(line.substr(0, eq));
    if (key.empty()) {
      throw cae::ConfigError(config_path + ":" + std::to_string(lineno) +
                             ": expected key=value");
    }
    const std::string flag = "--" + key;
    if (!given(flag)) cleaned.push_back(flag + "=" + trimmed(line.substr(eq + 1)));
  }
  return cleaned;
}

void add_config_flag(CLI::App* cmd) {
  // handled before parsing (see with_config_defaults); registered so the
  // option shows up in help output
  cmd->add_option("--config", "read option defaults from a key=value file");
}

void add_corpus_flags(CLI::App* cmd, cae::TrainOptions& o) {
  cmd->add_option("--style1-file", o.style1_file, "style-1 corpus, one sentence per line")
      ->required();
  cmd->add_option("--style2-file", o.style2_file, "style-2 corpus, one sentence per line")
      ->required();
  cmd->add_option("--out", o.out_dir, "output directory for run artifacts")
      ->capture_default_str();
  cmd->add_option("--split", o.split,
                  "per-corpus bucket fractions, train/valid[/test]; must sum to 1")
      ->expected(2, 3)
      ->capture_default_str();
  cmd->add_flag("--lowercase", o.lowercase, "lowercase ASCII letters while tokenizing");
}

void add_train_config_flags(CLI::App* cmd, cae::TrainConfig& c) {
  cmd->add_option("--hidden", c.hidden, "latent / LSTM hidden width")->capture_default_str();
  cmd->add_option("--lambda1", c.lambda1, "reconstruction weight")->capture_default_str();
  cmd->add_option("--lambda2", c.lambda2, "adversarial weight")->capture_default_str();
  cmd->add_option("--lambda3", c.lambda3, "cycle-consistency weight")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "sentences per training batch")
      ->capture_default_str();
  cmd->add_option("--epochs", c.epochs, "passes over the training corpora")
      ->capture_default_str();
  cmd->add_option("--lr-autoencoder", c.lr_autoencoder, "autoencoder learning rate")
      ->capture_default_str();
  cmd->add_option("--lr-generator", c.lr_generator, "transfer-net learning rate")
      ->capture_default_str();
  cmd->add_option("--lr-discriminator", c.lr_discriminator, "discriminator learning rate")
      ->capture_default_str();
  cmd->add_option("--disc-steps", c.disc_steps_per_gen_step,
                  "discriminator updates per generator update")
      ->capture_default_str();
  cmd->add_option("--warmup-epochs", c.warmup_epochs,
                  "autoencoder-only epochs before adversarial and cycle training")
      ->capture_default_str();
  cmd->add_option("--max-len", c.max_len, "training-time sentence truncation")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "seed for every random choice in the run")
      ->capture_default_str();
  cmd->add_option("--vocab-max-size", c.vocab_max_size, "cap on non-special vocabulary entries")
      ->capture_default_str();
  cmd->add_flag("--no-cycle", c.no_cycle, "ablation: drop the cycle-consistency term");
  cmd->add_flag("--no-discriminators", c.no_discriminators,
                "ablation: drop adversarial training");
}

void add_judge_flags(CLI::App* cmd, cae::EvaluateOptions& o) {
  cmd->add_option("--lm-heldout-fraction", o.lm_heldout_fraction,
                  "share of the real target corpus held out from the fluency model")
      ->capture_default_str();
  cmd->add_option("--classifier-dim", o.classifier.embedding_dim,
                  "style classifier embedding width")
      ->capture_default_str();
  cmd->add_option("--classifier-epochs", o.classifier.epochs, "style classifier epoch cap")
      ->capture_default_str();
  cmd->add_option("--classifier-batch-size", o.classifier.batch_size,
                  "style classifier batch size")
      ->capture_default_str();
  cmd->add_option("--classifier-lr", o.classifier.lr, "style classifier learning rate")
      ->capture_default_str();
  cmd->add_option("--classifier-patience", o.classifier.patience,
                  "epochs without held-out improvement before stopping")
      ->capture_default_str();
  cmd->add_option("--lm-embedding", o.lm.embedding, "language model embedding width")
      ->capture_default_str();
  cmd->add_option("--lm-hidden", o.lm.hidden, "language model hidden width")
      ->capture_default_str();
  cmd->add_option("--lm-dropout", o.lm.dropout, "language model dropout rate")
      ->capture_default_str();
  cmd->add_option("--lm-epochs", o.lm.epochs, "language model training epochs")
      ->capture_default_str();
  cmd->add_option("--lm-batch-size", o.lm.batch_size, "language model batch size")
      ->capture_default_str();
  cmd->add_option("--lm-lr", o.lm.lr, "language model learning rate")->capture_default_str();
  cmd->add_option("--lm-max-len", o.lm.max_len, "language model training truncation")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-consistent adversarial autoencoders for unsupervised text style transfer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("cae ") + cae::kToolVersion);

  cae::TrainOptions train_options;
  cae::TransferOptions transfer_options;
  cae::EvaluateOptions evaluate_options;
  cae::AblateOptions ablate_options;

  CLI::App* train_cmd =
      app.add_subcommand("train", "train a style transfer model on two corpora");
  add_config_flag(train_cmd);
  add_corpus_flags(train_cmd, train_options);
  add_train_config_flags(train_cmd, train_options.config);

  CLI::App* transfer_cmd =
      app.add_subcommand("transfer", "rewrite a file of sentences in the other style");
  add_config_flag(transfer_cmd);
  transfer_cmd->add_option("--checkpoint", transfer_options.checkpoint_file,
                           "model checkpoint from a training run")
      ->required();
  transfer_cmd->add_option("--vocab", transfer_options.vocab_file,
                           "vocabulary file saved with the checkpoint")
      ->required();
  transfer_cmd->add_option("--input", transfer_options.input_file,
                           "sentences to rewrite, one per line")
      ->required();
  transfer_cmd->add_option("--output", transfer_options.output_file,
                           "where the line-aligned rewrites go")
      ->required();
  transfer_cmd
      ->add_option("--direction", transfer_options.direction, "1to2 or 2to1")
      ->capture_default_str();
  transfer_cmd->add_option("--max-len", transfer_options.max_len, "decoding length budget")
      ->capture_default_str();
  transfer_cmd->add_flag("--lowercase", transfer_options.lowercase,
                         "lowercase ASCII letters while tokenizing");

  CLI::App* evaluate_cmd =
      app.add_subcommand("evaluate", "score a transferred corpus against its sources");
  add_config_flag(evaluate_cmd);
  evaluate_cmd->add_option("--source", evaluate_options.source_file,
                           "lines the transfer started from")
      ->required();
  evaluate_cmd->add_option("--transferred", evaluate_options.transferred_file,
                           "line-aligned model outputs")
      ->required();
  evaluate_cmd
      ->add_option("--style1-file", evaluate_options.style1_file, "real style-1 corpus")
      ->required();
  evaluate_cmd
      ->add_option("--style2-file", evaluate_options.style2_file, "real style-2 corpus")
      ->required();
  evaluate_cmd->add_option("--report", evaluate_options.report_file, "report output path")
      ->capture_default_str();
  evaluate_cmd
      ->add_option("--target-style", evaluate_options.target_style,
                   "style the transfer was aimed at (1 or 2)")
      ->capture_default_str();
  evaluate_cmd->add_option("--vocab-max-size", evaluate_options.vocab_max_size,
                           "cap on non-special vocabulary entries")
      ->capture_default_str();
  evaluate_cmd->add_option("--seed", evaluate_options.seed, "seed for the judge models")
      ->capture_default_str();
  evaluate_cmd->add_flag("--lowercase", evaluate_options.lowercase,
                         "lowercase ASCII letters while tokenizing");
  add_judge_flags(evaluate_cmd, evaluate_options);

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "train full / no-cycle / no-discriminators variants and score all three");
  add_config_flag(ablate_cmd);
  add_corpus_flags(ablate_cmd, ablate_options.train);
  add_train_config_flags(ablate_cmd, ablate_options.train.config);
  ablate_cmd
      ->add_option("--decode-max-len", ablate_options.max_len, "transfer decoding budget")
      ->capture_default_str();
  ablate_cmd->add_option("--judge-seed", ablate_options.eval.seed, "seed for the judge models")
      ->capture_default_str();
  add_judge_flags(ablate_cmd, ablate_options.eval);

  std::vector<std::string> args;
  try {
    args = with_config_defaults(argc, argv);
  } catch (const cae::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cae::exit_code_for(e);
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cae::kExitOk : cae::kExitConfig;
  }

  if (train_cmd->parsed()) return cae::run_train(train_options, std::cout, std::cerr);
  if (transfer_cmd->parsed()) return cae::run_transfer(transfer_options, std::cout, std::cerr);
  if (evaluate_cmd->parsed()) return cae::run_evaluate(evaluate_options, std::cout, std::cerr);
  if (ablate_cmd->parsed()) return cae::run_ablate(ablate_options, std::cout, std::cerr);
  return cae::kExitUsage;
}
