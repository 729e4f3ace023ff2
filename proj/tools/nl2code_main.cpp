#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nl2code/config.hpp"
#include "nl2code/errors.hpp"
#include "nl2code/trainer.hpp"

namespace {

using nl2code::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::string checkpoint;
  std::optional<unsigned long long> seed;
  std::optional<long long> mined_limit;
  std::optional<std::string> regime;
  std::optional<std::string> mode;
  std::optional<double> alpha;
  int beam = 2;
};

void add_config_flag(CLI::App* cmd, CommonFlags& flags, bool required) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run configuration JSON file");
  if (required) opt->required();
}

void add_override_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option_function<unsigned long long>(
      "--seed", [&flags](unsigned long long s) { flags.seed = s; },
      "base seed; data/init/dropout/noise streams use seed..seed+3");
  cmd->add_option_function<long long>(
      "--mined-limit", [&flags](long long v) { flags.mined_limit = v; },
      "cap on mined records read from paths.mined");
  cmd->add_option_function<std::string>(
         "--regime", [&flags](const std::string& v) { flags.regime = v; },
         "training regime")
      ->check(CLI::IsMember({"mix", "sample", "finetune"}));
  cmd->add_option_function<std::string>(
         "--mode", [&flags](const std::string& v) { flags.mode = v; },
         "back-translation mode")
      ->check(CLI::IsMember({"ctc", "ctc-noise", "tct", "cycle"}));
  cmd->add_option_function<double>(
      "--alpha", [&flags](double v) { flags.alpha = v; },
      "reconstruction weight (back-translation runs) or mined-row weight (sample regime)");
}

RunConfig finalize_config(const CommonFlags& flags) {
  RunConfig cfg = flags.config_path.empty()
                      ? nl2code::checkpoint_run_config(flags.checkpoint)
                      : RunConfig::from_json_file(flags.config_path);
  if (flags.seed.has_value()) {
    cfg.seeds.data = *flags.seed;
    cfg.seeds.init = *flags.seed + 1;
    cfg.seeds.dropout = *flags.seed + 2;
    cfg.seeds.noise = *flags.seed + 3;
  }
  if (flags.mined_limit.has_value()) cfg.regime.mined_limit = *flags.mined_limit;
  if (flags.regime.has_value()) cfg.regime.kind = nl2code::parse_regime_kind(*flags.regime);
  if (flags.mode.has_value()) {
    if (!cfg.backtrans.has_value()) cfg.backtrans = nl2code::BackTransConfig{};
    cfg.backtrans->mode = nl2code::parse_backtrans_mode(*flags.mode);
  }
  if (flags.alpha.has_value()) {
    // With a back-translation pipeline the flag tunes the reconstruction
    // weight; otherwise it tunes the sample regime's mined-row weight.
    if (cfg.backtrans.has_value()) {
      cfg.backtrans->alpha = *flags.alpha;
    } else {
      cfg.regime.alpha = *flags.alpha;
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-to-sequence code generation toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;

  CLI::App* tok = app.add_subcommand("tokenizer-train",
                                     "train the intent/snippet vocabularies");
  add_config_flag(tok, flags, /*required=*/true);
  add_override_flags(tok, flags);

  CLI::App* train = app.add_subcommand("train", "run the training loop");
  add_config_flag(train, flags, /*required=*/true);
  train->add_option("--checkpoint", flags.checkpoint, "checkpoint stem to resume from");
  add_override_flags(train, flags);

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a checkpoint on the held-out set");
  add_config_flag(evaluate, flags, /*required=*/false);
  evaluate->add_option("--checkpoint", flags.checkpoint, "checkpoint stem to load")->required();
  evaluate->add_option("--beam", flags.beam, "beam width")->check(CLI::PositiveNumber);

  std::string intent;
  CLI::App* translate = app.add_subcommand("translate", "decode snippets for intents");
  add_config_flag(translate, flags, /*required=*/false);
  translate->add_option("--checkpoint", flags.checkpoint, "checkpoint stem to load")->required();
  translate->add_option("--beam", flags.beam, "beam width")->check(CLI::PositiveNumber);
  translate->add_option("intent", intent,
                        "intent to translate (reads stdin lines when omitted)");

  CLI::App* ablation = app.add_subcommand("ablation",
                                          "fixture-scale sweeps over heads/depth/alpha");
  add_config_flag(ablation, flags, /*required=*/true);
  add_override_flags(ablation, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad flags are validation errors
  }

  try {
    if (tok->parsed()) {
      run_tokenizer_train(finalize_config(flags));
    } else if (train->parsed()) {
      nl2code::TrainOptions opts;
      opts.resume_checkpoint = flags.checkpoint;
      nl2code::run_train(finalize_config(flags), opts);
    } else if (evaluate->parsed()) {
      const RunConfig cfg = finalize_config(flags);
      const nl2code::EvalReport report =
          nl2code::run_evaluate(cfg, flags.checkpoint, flags.beam);
      std::cout << "corpus_bleu=" << report.corpus_bleu
                << " token_accuracy=" << report.token_accuracy
                << " examples=" << report.per_example.size()
                << " zero_bleu=" << report.zero_bleu_count << "\n";
    } else if (translate->parsed()) {
      const RunConfig cfg = flags.config_path.empty()
                                ? nl2code::checkpoint_run_config(flags.checkpoint)
                                : RunConfig::from_json_file(flags.config_path);
      if (!intent.empty()) {
        std::cout << nl2code::run_translate(cfg, flags.checkpoint, intent, flags.beam) << "\n";
      } else {
        std::string line;
        while (std::getline(std::cin, line)) {
          std::cout << nl2code::run_translate(cfg, flags.checkpoint, line, flags.beam) << "\n";
        }
      }
    } else if (ablation->parsed()) {
      std::cout << nl2code::run_ablation(finalize_config(flags));
    }
  } catch (const nl2code::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
