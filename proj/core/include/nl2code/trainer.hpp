#pragma once

#include <optional>
#include <string>

#include "nl2code/config.hpp"
#include "nl2code/metrics.hpp"

namespace nl2code {

struct TrainOptions {
  std::string resume_checkpoint;  // checkpoint stem to resume from ("" starts fresh)
  bool write_checkpoints = true;
  bool quiet = false;  // suppress progress lines (the metrics file is always written)
};

struct TrainResult {
  long long final_step = 0;
  double final_total = 0.0;
  std::string checkpoint_stem;  // final checkpoint, "" when checkpoints are disabled
  std::optional<EvalReport> final_eval;
};

// Trains the intent and snippet byte-pair vocabularies on the training
// corpora (annotated + mined) and writes src.vocab/src.merges and
// tgt.vocab/tgt.merges into paths.vocab_dir.
void run_tokenizer_train(const RunConfig& cfg);

// Full training loop: regime-driven batches, supervised or back-translation
// steps, metrics NDJSON under paths.metrics_dir, checkpoints under
// paths.checkpoint_dir, periodic evaluation when paths.test is set.
TrainResult run_train(const RunConfig& cfg, const TrainOptions& opts = {});

// The run description embedded in a checkpoint manifest.
RunConfig checkpoint_run_config(const std::string& checkpoint_stem);

// Rebuilds the model stored at checkpoint_stem, evaluates it on cfg's
// held-out set, writes report files under cfg.paths.metrics_dir, and returns
// the report.
EvalReport run_evaluate(const RunConfig& cfg, const std::string& checkpoint_stem, int beam);

// Beam-decodes one intent with the model stored at checkpoint_stem.
std::string run_translate(const RunConfig& cfg, const std::string& checkpoint_stem,
                          const std::string& intent, int beam);

// Fixture-scale sweeps over attention heads, stack depth, and the
// reconstruction weight. Writes markdown + JSON tables under
// paths.metrics_dir and returns the markdown.
std::string run_ablation(const RunConfig& base);

}  // namespace nl2code
