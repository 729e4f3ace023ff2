#include "nl2code/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nl2code/errors.hpp"

namespace nl2code {

using json = nlohmann::ordered_json;

RegimeKind parse_regime_kind(const std::string& name) {
  if (name == "mix") return RegimeKind::mix;
  if (name == "sample") return RegimeKind::sample;
  if (name == "finetune") return RegimeKind::finetune;
  throw ValidationError("unknown regime \"" + name + "\" (expected mix, sample, or finetune)");
}

const char* to_string(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::mix: return "mix";
    case RegimeKind::sample: return "sample";
    case RegimeKind::finetune: return "finetune";
  }
  return "unknown";
}

BackTransMode parse_backtrans_mode(const std::string& name) {
  if (name == "ctc") return BackTransMode::ctc;
  if (name == "ctc-noise") return BackTransMode::ctc_noise;
  if (name == "tct") return BackTransMode::tct;
  if (name == "cycle") return BackTransMode::cycle;
  throw ValidationError("unknown back-translation mode \"" + name +
                        "\" (expected ctc, ctc-noise, tct, or cycle)");
}

namespace {

void reject_unknown_keys(const json& obj, const char* section,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ValidationError(std::string("config: unknown key \"") + key + "\" in " + section);
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* section, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config: bad value for \"") + key + "\" in " + section);
  }
}

}  // namespace

void RunConfig::validate() const {
  if (run_id.empty()) throw ValidationError("config: run_id must be non-empty");
  model.validate();
  if (model.num_layers < 1) throw ValidationError("config: model.num_layers must be >= 1");
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (max_steps < 1) throw ValidationError("config: max_steps must be >= 1");
  if (eval_every < 1) throw ValidationError("config: eval_every must be >= 1");
  if (optimizer.lr <= 0) throw ValidationError("config: optimizer.lr must be > 0");
  if (optimizer.beta1 < 0 || optimizer.beta1 >= 1 || optimizer.beta2 < 0 || optimizer.beta2 >= 1) {
    throw ValidationError("config: optimizer betas must lie in [0, 1)");
  }
  if (optimizer.eps <= 0) throw ValidationError("config: optimizer.eps must be > 0");
  if (optimizer.warmup_steps < 1) throw ValidationError("config: optimizer.warmup_steps must be >= 1");
  if (optimizer.schedule != "noam" && optimizer.schedule != "constant") {
    throw ValidationError("config: optimizer.schedule must be \"noam\" or \"constant\"");
  }
  if (regime.alpha < 0) throw ValidationError("config: regime.alpha must be >= 0");
  if (regime.pretrain_steps < 0) throw ValidationError("config: regime.pretrain_steps must be >= 0");
  if (regime.mined_limit < 0) throw ValidationError("config: regime.mined_limit must be >= 0");
  if (backtrans.has_value()) {
    backtrans->validate();
    if (backtrans->soft_max_len > model.max_len) {
      throw ValidationError("config: backtranslation.soft_max_len exceeds model.max_len");
    }
  }
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: JSON parse error: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be a JSON object");
  reject_unknown_keys(root, "the top level",
                      {"run_id", "model", "regime", "backtranslation", "optimizer", "batch_size",
                       "max_steps", "eval_every", "seeds", "paths"});

  RunConfig cfg;
  read_field(root, "the top level", "run_id", cfg.run_id);
  read_field(root, "the top level", "batch_size", cfg.batch_size);
  read_field(root, "the top level", "max_steps", cfg.max_steps);
  read_field(root, "the top level", "eval_every", cfg.eval_every);

  if (auto it = root.find("model"); it != root.end()) {
    const json& m = *it;
    reject_unknown_keys(m, "model", {"num_layers", "num_heads", "d_model", "d_ff", "dropout",
                                     "src_vocab", "tgt_vocab", "max_len"});
    read_field(m, "model", "num_layers", cfg.model.num_layers);
    read_field(m, "model", "num_heads", cfg.model.num_heads);
    read_field(m, "model", "d_model", cfg.model.d_model);
    read_field(m, "model", "d_ff", cfg.model.d_ff);
    read_field(m, "model", "dropout", cfg.model.dropout);
    read_field(m, "model", "src_vocab", cfg.model.src_vocab);
    read_field(m, "model", "tgt_vocab", cfg.model.tgt_vocab);
    read_field(m, "model", "max_len", cfg.model.max_len);
  }
  if (auto it = root.find("regime"); it != root.end()) {
    const json& r = *it;
    reject_unknown_keys(r, "regime", {"kind", "alpha", "pretrain_steps", "mined_limit"});
    std::string kind = to_string(cfg.regime.kind);
    read_field(r, "regime", "kind", kind);
    cfg.regime.kind = parse_regime_kind(kind);
    read_field(r, "regime", "alpha", cfg.regime.alpha);
    read_field(r, "regime", "pretrain_steps", cfg.regime.pretrain_steps);
    read_field(r, "regime", "mined_limit", cfg.regime.mined_limit);
  }
  if (auto it = root.find("backtranslation"); it != root.end() && !it->is_null()) {
    const json& b = *it;
    reject_unknown_keys(b, "backtranslation", {"mode", "alpha", "noise_sigma", "soft_max_len"});
    BackTransConfig bt;
    std::string mode = to_string(bt.mode);
    read_field(b, "backtranslation", "mode", mode);
    bt.mode = parse_backtrans_mode(mode);
    read_field(b, "backtranslation", "alpha", bt.alpha);
    read_field(b, "backtranslation", "noise_sigma", bt.noise_sigma);
    read_field(b, "backtranslation", "soft_max_len", bt.soft_max_len);
    cfg.backtrans = bt;
  }
  if (auto it = root.find("optimizer"); it != root.end()) {
    const json& o = *it;
    reject_unknown_keys(o, "optimizer",
                        {"lr", "beta1", "beta2", "eps", "warmup_steps", "schedule", "clip_norm"});
    read_field(o, "optimizer", "lr", cfg.optimizer.lr);
    read_field(o, "optimizer", "beta1", cfg.optimizer.beta1);
    read_field(o, "optimizer", "beta2", cfg.optimizer.beta2);
    read_field(o, "optimizer", "eps", cfg.optimizer.eps);
    read_field(o, "optimizer", "warmup_steps", cfg.optimizer.warmup_steps);
    read_field(o, "optimizer", "schedule", cfg.optimizer.schedule);
    read_field(o, "optimizer", "clip_norm", cfg.optimizer.clip_norm);
  }
  if (auto it = root.find("seeds"); it != root.end()) {
    const json& s = *it;
    reject_unknown_keys(s, "seeds", {"data", "init", "dropout", "noise"});
    read_field(s, "seeds", "data", cfg.seeds.data);
    read_field(s, "seeds", "init", cfg.seeds.init);
    read_field(s, "seeds", "dropout", cfg.seeds.dropout);
    read_field(s, "seeds", "noise", cfg.seeds.noise);
  }
  if (auto it = root.find("paths"); it != root.end()) {
    const json& p = *it;
    reject_unknown_keys(p, "paths",
                        {"annotated", "mined", "test", "vocab_dir", "checkpoint_dir", "metrics_dir"});
    read_field(p, "paths", "annotated", cfg.paths.annotated);
    read_field(p, "paths", "mined", cfg.paths.mined);
    read_field(p, "paths", "test", cfg.paths.test);
    read_field(p, "paths", "vocab_dir", cfg.paths.vocab_dir);
    read_field(p, "paths", "checkpoint_dir", cfg.paths.checkpoint_dir);
    read_field(p, "paths", "metrics_dir", cfg.paths.metrics_dir);
  }
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return from_json_text(buffer.str());
  } catch (ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string RunConfig::to_json_text() const {
  json root;
  root["run_id"] = run_id;
  root["model"] = {{"num_layers", model.num_layers}, {"num_heads", model.num_heads},
                   {"d_model", model.d_model},       {"d_ff", model.d_ff},
                   {"dropout", model.dropout},       {"src_vocab", model.src_vocab},
                   {"tgt_vocab", model.tgt_vocab},   {"max_len", model.max_len}};
  root["regime"] = {{"kind", to_string(regime.kind)},
                    {"alpha", regime.alpha},
                    {"pretrain_steps", regime.pretrain_steps},
                    {"mined_limit", regime.mined_limit}};
  if (backtrans.has_value()) {
    root["backtranslation"] = {{"mode", to_string(backtrans->mode)},
                               {"alpha", backtrans->alpha},
                               {"noise_sigma", backtrans->noise_sigma},
                               {"soft_max_len", backtrans->soft_max_len}};
  } else {
    root["backtranslation"] = nullptr;
  }
  root["optimizer"] = {{"lr", optimizer.lr},
                       {"beta1", optimizer.beta1},
                       {"beta2", optimizer.beta2},
                       {"eps", optimizer.eps},
                       {"warmup_steps", optimizer.warmup_steps},
                       {"schedule", optimizer.schedule},
                       {"clip_norm", optimizer.clip_norm}};
  root["batch_size"] = batch_size;
  root["max_steps"] = max_steps;
  root["eval_every"] = eval_every;
  root["seeds"] = {{"data", seeds.data},
                   {"dropout", seeds.dropout},
                   {"init", seeds.init},
                   {"noise", seeds.noise}};
  root["paths"] = {{"annotated", paths.annotated},
                   {"checkpoint_dir", paths.checkpoint_dir},
                   {"metrics_dir", paths.metrics_dir},
                   {"mined", paths.mined},
                   {"test", paths.test},
                   {"vocab_dir", paths.vocab_dir}};
  return root.dump(2) + "\n";
}

}  // namespace nl2code
