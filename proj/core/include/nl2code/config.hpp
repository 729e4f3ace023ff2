#pragma once

#include <optional>
#include <string>

#include "nl2code/backtranslation.hpp"
#include "nl2code/data.hpp"
#include "nl2code/transformer.hpp"

namespace nl2code {

struct OptimizerConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int warmup_steps = 400;
  std::string schedule = "noam";  // "noam" or "constant"
  double clip_norm = 5.0;         // <= 0 disables clipping
};

struct SeedsConfig {
  unsigned long long data = 1;
  unsigned long long init = 2;
  unsigned long long dropout = 3;
  unsigned long long noise = 4;
};

struct PathsConfig {
  std::string annotated;       // training pairs, JSON array
  std::string mined;           // mined pairs, NDJSON
  std::string test;            // held-out pairs, JSON array (optional)
  std::string vocab_dir;       // where <side>.vocab / <side>.merges live
  std::string checkpoint_dir;  // checkpoint stems are written here
  std::string metrics_dir;     // per-run metrics NDJSON is written here
};

// One training/evaluation run, loadable from a JSON file.  Every field has a
// default; unknown keys are rejected.
struct RunConfig {
  std::string run_id = "run";
  TransformerConfig model;
  RegimeConfig regime;
  std::optional<BackTransConfig> backtrans;
  OptimizerConfig optimizer;
  int batch_size = 32;
  long long max_steps = 500;
  long long eval_every = 100;
  SeedsConfig seeds;
  PathsConfig paths;

  // Throws ValidationError; requires num_layers >= 1 at run level.
  void validate() const;

  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
  std::string to_json_text() const;
};

RegimeKind parse_regime_kind(const std::string& name);    // ValidationError
const char* to_string(RegimeKind kind);
BackTransMode parse_backtrans_mode(const std::string& name);  // ValidationError

}  // namespace nl2code
