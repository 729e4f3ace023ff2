#include "nl2code/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "nl2code/backtranslation.hpp"
#include "nl2code/beam.hpp"
#include "nl2code/checkpoint.hpp"
#include "nl2code/data.hpp"
#include "nl2code/errors.hpp"
#include "nl2code/token_ids.hpp"

namespace nl2code {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

struct VocabPaths {
  std::string src_vocab, src_merges, tgt_vocab, tgt_merges;
};

VocabPaths vocab_paths(const std::string& vocab_dir) {
  return {join(vocab_dir, "src.vocab"), join(vocab_dir, "src.merges"),
          join(vocab_dir, "tgt.vocab"), join(vocab_dir, "tgt.merges")};
}

struct VocabPair {
  Vocab src;
  Vocab tgt;
};

VocabPair load_vocabs(const std::string& vocab_dir) {
  if (vocab_dir.empty()) throw ValidationError("paths.vocab_dir must be set");
  const VocabPaths p = vocab_paths(vocab_dir);
  return {Vocab::load(p.src_vocab, p.src_merges), Vocab::load(p.tgt_vocab, p.tgt_merges)};
}

bool vocabs_exist(const std::string& vocab_dir) {
  const VocabPaths p = vocab_paths(vocab_dir);
  return fs::exists(p.src_vocab) && fs::exists(p.src_merges) && fs::exists(p.tgt_vocab) &&
         fs::exists(p.tgt_merges);
}

void require_path(const std::string& value, const char* name) {
  if (value.empty()) throw ValidationError(std::string("paths.") + name + " must be set");
}

// Keeps the rows whose positions are listed; padding stays at the parent
// batch's width, which every consumer masks out.
Batch select_rows(const Batch& batch, const std::vector<int>& rows) {
  Batch out;
  for (int r : rows) {
    out.src.push_back(batch.src[r]);
    out.tgt.push_back(batch.tgt[r]);
    out.src_pad.push_back(batch.src_pad[r]);
    out.tgt_pad.push_back(batch.tgt_pad[r]);
    out.mined.push_back(batch.mined[r]);
    out.weights.push_back(batch.weights[r]);
  }
  return out;
}

StepReport supervised_step(TransformerModel& model, const Batch& batch, AdamState& adam,
                           double lr, double clip_norm, long long step, Rng* dropout_rng) {
  if (batch.size() == 0) throw ValidationError("supervised step: empty batch");
  const double inv_b = 1.0 / batch.size();
  Tensor total;
  for (int r = 0; r < batch.size(); ++r) {
    const Tensor weighted =
        scale(model.forward_nll(batch.src[r], batch.tgt[r], /*train=*/true, dropout_rng),
              batch.weights[r] * inv_b);
    total = r == 0 ? weighted : add(total, weighted);
  }
  backward(total);
  std::vector<std::pair<std::string, Tensor>> params = model.parameters();
  const double grad_norm = clip_global_norm(params, clip_norm);
  adam_step(params, adam, lr);

  StepReport rep;
  rep.step = step;
  rep.mode = "supervised";
  rep.components["sup_code"] = total.value();
  rep.total = total.value();
  rep.lr = lr;
  rep.grad_norm = grad_norm;
  return rep;
}

TransformerConfig swapped(const TransformerConfig& cfg) {
  TransformerConfig g = cfg;
  std::swap(g.src_vocab, g.tgt_vocab);
  return g;
}

std::string compact_run_json(const RunConfig& cfg) {
  return json::parse(cfg.to_json_text()).dump();
}

struct LoadedModel {
  RunConfig cfg;
  std::optional<TransformerModel> single;
  std::optional<DualModel> dual;

  TransformerModel& eval_model() { return dual ? dual->F : *single; }
};

LoadedModel load_model(const std::string& checkpoint_stem) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint_stem);
  std::string run_json, model_kind = "single";
  for (const auto& [key, value] : ck.config_fields) {
    if (key == "run_json") run_json = value;
    if (key == "model_kind") model_kind = value;
  }
  if (run_json.empty()) {
    throw ValidationError(checkpoint_stem + ": checkpoint has no embedded run description");
  }
  LoadedModel lm;
  lm.cfg = RunConfig::from_json_text(run_json);
  Rng scratch_rng(0);
  std::vector<std::pair<std::string, Tensor>> params;
  if (model_kind == "dual") {
    lm.dual.emplace(lm.cfg.model, swapped(lm.cfg.model), scratch_rng);
    params = lm.dual->all_parameters();
  } else {
    lm.single.emplace(lm.cfg.model, scratch_rng);
    params = lm.single->parameters();
  }
  apply_checkpoint(ck, params);
  return lm;
}

void truncate_framed(std::vector<int>& ids, int max_len) {
  if (static_cast<int>(ids.size()) > max_len) {
    ids.resize(max_len);
    ids.back() = kEosId;
  }
}

Corpus load_test_corpus(const std::string& path) {
  Corpus test = load_annotated(path);
  test.split = Split::test;
  return test;
}

}  // namespace

void run_tokenizer_train(const RunConfig& cfg) {
  cfg.validate();
  require_path(cfg.paths.annotated, "annotated");
  require_path(cfg.paths.mined, "mined");
  require_path(cfg.paths.vocab_dir, "vocab_dir");

  const Corpus annotated = load_annotated(cfg.paths.annotated);
  const Corpus mined = load_mined(cfg.paths.mined, cfg.regime.mined_limit);

  std::vector<std::string> intents, snippets;
  for (const Corpus* corpus : {&annotated, &mined}) {
    for (const Example& ex : corpus->examples) {
      intents.push_back(effective_intent(ex));
      snippets.push_back(ex.snippet);
    }
  }
  const Vocab src = train_vocab(intents, cfg.model.src_vocab);
  const Vocab tgt = train_vocab(snippets, cfg.model.tgt_vocab);

  fs::create_directories(cfg.paths.vocab_dir);
  const VocabPaths p = vocab_paths(cfg.paths.vocab_dir);
  src.save(p.src_vocab, p.src_merges);
  tgt.save(p.tgt_vocab, p.tgt_merges);
  std::cout << "[tokenizer] wrote " << src.size() << "-piece intent vocabulary and "
            << tgt.size() << "-piece snippet vocabulary to " << cfg.paths.vocab_dir << "\n";
}

TrainResult run_train(const RunConfig& cfg_in, const TrainOptions& opts) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  require_path(cfg.paths.annotated, "annotated");
  require_path(cfg.paths.mined, "mined");
  require_path(cfg.paths.vocab_dir, "vocab_dir");
  require_path(cfg.paths.metrics_dir, "metrics_dir");
  if (opts.write_checkpoints) require_path(cfg.paths.checkpoint_dir, "checkpoint_dir");

  VocabPair voc = load_vocabs(cfg.paths.vocab_dir);
  // The model embeds exactly the trained pieces; the configured sizes are the
  // tokenizer's budget, not the final table sizes.
  cfg.model.src_vocab = voc.src.size();
  cfg.model.tgt_vocab = voc.tgt.size();
  cfg.validate();

  const Corpus annotated = load_annotated(cfg.paths.annotated);
  const Corpus mined = load_mined(cfg.paths.mined, cfg.regime.mined_limit);
  std::vector<EncodedExample> annotated_enc =
      encode_corpus(annotated, voc.src, voc.tgt, cfg.model.max_len);
  std::vector<EncodedExample> mined_enc = encode_corpus(mined, voc.src, voc.tgt, cfg.model.max_len);
  RegimeBatcher batcher(cfg.regime, std::move(annotated_enc), std::move(mined_enc),
                        cfg.batch_size, cfg.seeds.data);

  Rng init_rng(cfg.seeds.init);
  std::optional<TransformerModel> single;
  std::optional<DualModel> dual;
  if (cfg.backtrans.has_value()) {
    dual.emplace(cfg.model, swapped(cfg.model), init_rng);
  } else {
    single.emplace(cfg.model, init_rng);
  }
  auto all_params = [&]() {
    return dual ? dual->all_parameters() : single->parameters();
  };

  AdamState adam;
  adam.beta1 = cfg.optimizer.beta1;
  adam.beta2 = cfg.optimizer.beta2;
  adam.eps = cfg.optimizer.eps;

  long long start_step = 1;
  if (!opts.resume_checkpoint.empty()) {
    const LoadedCheckpoint ck = load_checkpoint(opts.resume_checkpoint);
    std::vector<std::pair<std::string, Tensor>> params = all_params();
    apply_checkpoint(ck, params);
    adam = ck.adam;
    start_step = ck.step + 1;
    for (long long s = 1; s <= ck.step; ++s) batcher.next(s);  // replay the data stream
    if (!opts.quiet) {
      std::cout << "[train] resumed " << cfg.run_id << " from step " << ck.step << "\n";
    }
  }

  const LrSchedule schedule{cfg.optimizer.schedule, cfg.model.d_model, cfg.optimizer.warmup_steps,
                            1.0, cfg.optimizer.lr};
  // Resumption re-seeds the per-step randomness streams; offsetting by the
  // start step keeps a resumed run from replaying the beginning of the
  // original stream.
  Rng dropout_rng(cfg.seeds.dropout + static_cast<unsigned long long>(start_step - 1));
  Rng noise_rng(cfg.seeds.noise + static_cast<unsigned long long>(start_step - 1));

  fs::create_directories(cfg.paths.metrics_dir);
  const std::string metrics_path = join(cfg.paths.metrics_dir, cfg.run_id + ".metrics.ndjson");
  std::ofstream metrics(metrics_path,
                        start_step > 1 ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path);

  std::optional<Corpus> test;
  if (!cfg.paths.test.empty()) test = load_test_corpus(cfg.paths.test);

  const std::vector<std::pair<std::string, std::string>> checkpoint_fields = {
      {"model_kind", dual ? "dual" : "single"}, {"run_json", compact_run_json(cfg)}};
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  TrainResult result;
  if (start_step > cfg.max_steps) {
    std::cerr << "[train] checkpoint is already at step " << start_step - 1
              << "; nothing to do\n";
    result.final_step = start_step - 1;
    result.checkpoint_stem = opts.resume_checkpoint;
    return result;
  }

  for (long long step = start_step; step <= cfg.max_steps; ++step) {
    const Batch batch = batcher.next(step);
    const double lr = schedule.at(step);
    StepReport rep;
    if (!cfg.backtrans.has_value()) {
      rep = supervised_step(*single, batch, adam, lr, cfg.optimizer.clip_norm, step,
                            &dropout_rng);
    } else {
      StepOptimizer opt{adam, lr, cfg.optimizer.clip_norm};
      const BackTransConfig& bt = *cfg.backtrans;
      if (bt.mode == BackTransMode::cycle) {
        // Alternate rows between the two cycle directions.
        std::vector<int> text_rows, code_rows;
        for (int r = 0; r < batch.size(); ++r) {
          (r % 2 == 0 ? text_rows : code_rows).push_back(r);
        }
        rep = cycle_step(*dual, select_rows(batch, text_rows), select_rows(batch, code_rows), bt,
                         opt, step, &dropout_rng);
      } else {
        // Annotated rows carry the supervised term, mined rows the
        // reconstruction term.
        std::vector<int> annotated_rows, mined_rows;
        for (int r = 0; r < batch.size(); ++r) {
          (batch.mined[r] ? mined_rows : annotated_rows).push_back(r);
        }
        const Batch ann = select_rows(batch, annotated_rows);
        const Batch min = select_rows(batch, mined_rows);
        rep = bt.mode == BackTransMode::tct
                  ? tct_step(*dual, min, ann, bt, opt, step, &dropout_rng, &noise_rng)
                  : ctc_step(*dual, min, ann, bt, opt, step, &dropout_rng, &noise_rng);
      }
    }

    json record;
    record["type"] = "step";
    record["step"] = step;
    record["wall_time"] = elapsed();
    record["mode"] = rep.mode;
    record["lr"] = rep.lr;
    record["grad_norm"] = rep.grad_norm;
    record["total"] = rep.total;
    record["components"] = rep.components;
    metrics << record.dump() << "\n";
    result.final_step = step;
    result.final_total = rep.total;

    if (!opts.quiet && (step % 50 == 0 || step == cfg.max_steps)) {
      std::cout << "[train] step " << step << "/" << cfg.max_steps << " total=" << rep.total
                << " lr=" << rep.lr << " grad_norm=" << rep.grad_norm << "\n";
    }

    const bool boundary = step % cfg.eval_every == 0 || step == cfg.max_steps;
    if (!boundary) continue;

    if (test.has_value()) {
      TransformerModel& model = dual ? dual->F : *single;
      const EvalReport er = evaluate(model, *test, voc.src, voc.tgt, /*beam=*/2);
      json eval_record;
      eval_record["type"] = "eval";
      eval_record["step"] = step;
      eval_record["wall_time"] = elapsed();
      eval_record["corpus_bleu"] = er.corpus_bleu;
      eval_record["token_accuracy"] = er.token_accuracy;
      eval_record["zero_bleu_count"] = er.zero_bleu_count;
      eval_record["examples"] = static_cast<long long>(er.per_example.size());
      metrics << eval_record.dump() << "\n";
      if (!opts.quiet) {
        std::cout << "[train] step " << step << " eval: bleu=" << er.corpus_bleu
                  << " token_accuracy=" << er.token_accuracy << "\n";
      }
      result.final_eval = er;
    }
    if (opts.write_checkpoints) {
      fs::create_directories(cfg.paths.checkpoint_dir);
      std::vector<std::pair<std::string, Tensor>> params = all_params();
      const std::string stem =
          join(cfg.paths.checkpoint_dir, cfg.run_id + "-step" + std::to_string(step));
      save_checkpoint(stem, params, adam, checkpoint_fields, step);
      save_checkpoint(join(cfg.paths.checkpoint_dir, cfg.run_id + "-latest"), params, adam,
                      checkpoint_fields, step);
      result.checkpoint_stem = stem;
      if (!opts.quiet) std::cout << "[train] wrote checkpoint " << stem << "\n";
    }
  }
  return result;
}

RunConfig checkpoint_run_config(const std::string& checkpoint_stem) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint_stem);
  for (const auto& [key, value] : ck.config_fields) {
    if (key == "run_json") return RunConfig::from_json_text(value);
  }
  throw ValidationError(checkpoint_stem + ": checkpoint has no embedded run description");
}

EvalReport run_evaluate(const RunConfig& cfg, const std::string& checkpoint_stem, int beam) {
  require_path(cfg.paths.test, "test");
  LoadedModel lm = load_model(checkpoint_stem);
  VocabPair voc = load_vocabs(cfg.paths.vocab_dir);
  if (voc.src.size() != lm.cfg.model.src_vocab || voc.tgt.size() != lm.cfg.model.tgt_vocab) {
    throw ValidationError("vocabulary sizes (" + std::to_string(voc.src.size()) + ", " +
                          std::to_string(voc.tgt.size()) +
                          ") do not match the checkpoint's embeddings (" +
                          std::to_string(lm.cfg.model.src_vocab) + ", " +
                          std::to_string(lm.cfg.model.tgt_vocab) + ")");
  }
  const Corpus test = load_test_corpus(cfg.paths.test);
  const EvalReport report = evaluate(lm.eval_model(), test, voc.src, voc.tgt, beam);
  if (!cfg.paths.metrics_dir.empty()) {
    fs::create_directories(cfg.paths.metrics_dir);
    write_eval_report(report, join(cfg.paths.metrics_dir, cfg.run_id + "-eval.json"),
                      join(cfg.paths.metrics_dir, cfg.run_id + "-eval.ndjson"));
  }
  return report;
}

std::string run_translate(const RunConfig& cfg, const std::string& checkpoint_stem,
                          const std::string& intent, int beam) {
  LoadedModel lm = load_model(checkpoint_stem);
  VocabPair voc = load_vocabs(cfg.paths.vocab_dir.empty() ? lm.cfg.paths.vocab_dir
                                                          : cfg.paths.vocab_dir);
  std::vector<int> src = voc.src.encode(intent, /*add_bos_eos=*/true);
  truncate_framed(src, lm.cfg.model.max_len);
  const std::vector<int> out =
      beam_decode(lm.eval_model(), src, beam, lm.cfg.model.max_len - 1);
  return voc.tgt.decode(out);
}

std::string run_ablation(const RunConfig& base) {
  base.validate();
  require_path(base.paths.annotated, "annotated");
  require_path(base.paths.mined, "mined");
  require_path(base.paths.vocab_dir, "vocab_dir");
  require_path(base.paths.metrics_dir, "metrics_dir");
  require_path(base.paths.test, "test");
  if (!vocabs_exist(base.paths.vocab_dir)) run_tokenizer_train(base);

  struct Cell {
    std::string setting;
    double value = 0.0;
    bool ok = false;
    double bleu = 0.0, token_accuracy = 0.0, final_loss = 0.0;
    std::string error;
  };
  TrainOptions cell_opts;
  cell_opts.write_checkpoints = false;
  cell_opts.quiet = true;

  auto run_cell = [&](RunConfig cfg, const std::string& setting, double value) {
    Cell cell;
    cell.setting = setting;
    cell.value = value;
    try {
      cfg.validate();
      const TrainResult res = run_train(cfg, cell_opts);
      cell.ok = true;
      cell.final_loss = res.final_total;
      if (res.final_eval.has_value()) {
        cell.bleu = res.final_eval->corpus_bleu;
        cell.token_accuracy = res.final_eval->token_accuracy;
      }
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    return cell;
  };

  // Heads and depth sweeps isolate the architecture (supervised only); the
  // alpha sweep exercises the reconstruction objective.
  std::vector<Cell> heads_cells, layers_cells, alpha_cells;
  for (int heads : {1, 2, 4, 8, 16}) {
    RunConfig cfg = base;
    cfg.backtrans.reset();
    cfg.model.num_heads = heads;
    cfg.run_id = base.run_id + "-ab-heads" + std::to_string(heads);
    heads_cells.push_back(run_cell(cfg, "heads", heads));
  }
  for (int layers : {1, 2, 3, 6}) {
    RunConfig cfg = base;
    cfg.backtrans.reset();
    cfg.model.num_layers = layers;
    cfg.run_id = base.run_id + "-ab-layers" + std::to_string(layers);
    layers_cells.push_back(run_cell(cfg, "layers", layers));
  }
  for (double alpha : {0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0}) {
    RunConfig cfg = base;
    if (!cfg.backtrans.has_value()) cfg.backtrans = BackTransConfig{};
    if (cfg.backtrans->soft_max_len > cfg.model.max_len) {
      cfg.backtrans->soft_max_len = cfg.model.max_len;
    }
    cfg.backtrans->alpha = alpha;
    std::ostringstream id;
    id << base.run_id << "-ab-alpha" << alpha;
    cfg.run_id = id.str();
    alpha_cells.push_back(run_cell(cfg, "alpha", alpha));
  }

  const std::string note =
      "All numbers come from miniature fixture-scale runs; they are not comparable to "
      "full-corpus results.";
  std::ostringstream md;
  md << "# Ablation sweeps\n\n" << note << "\n";
  const auto emit_table = [&](const char* title, const char* column,
                              const std::vector<Cell>& cells, bool integer_setting) {
    md << "\n## " << title << "\n\n";
    md << "| " << column << " | BLEU | token accuracy | final loss |\n";
    md << "| --- | --- | --- | --- |\n";
    for (const Cell& c : cells) {
      md << "| ";
      if (integer_setting) {
        md << static_cast<int>(c.value);
      } else {
        md << c.value;
      }
      md << " | ";
      if (c.ok) {
        md << c.bleu << " | " << c.token_accuracy << " | " << c.final_loss << " |\n";
      } else {
        md << "error: " << c.error << " | — | — |\n";
      }
    }
  };
  emit_table("Attention heads (supervised)", "heads", heads_cells, true);
  emit_table("Stack depth (supervised)", "layers", layers_cells, true);
  emit_table("Reconstruction weight (back-translation)", "alpha", alpha_cells, false);

  json doc;
  doc["note"] = note;
  const auto cells_json = [](const std::vector<Cell>& cells) {
    json arr = json::array();
    for (const Cell& c : cells) {
      json row;
      row[c.setting] = c.value;
      if (c.ok) {
        row["bleu"] = c.bleu;
        row["token_accuracy"] = c.token_accuracy;
        row["final_loss"] = c.final_loss;
        row["error"] = nullptr;
      } else {
        row["bleu"] = nullptr;
        row["token_accuracy"] = nullptr;
        row["final_loss"] = nullptr;
        row["error"] = c.error;
      }
      arr.push_back(row);
    }
    return arr;
  };
  doc["sweeps"]["heads"] = cells_json(heads_cells);
  doc["sweeps"]["layers"] = cells_json(layers_cells);
  doc["sweeps"]["alpha"] = cells_json(alpha_cells);

  fs::create_directories(base.paths.metrics_dir);
  const std::string md_path = join(base.paths.metrics_dir, base.run_id + "-ablation.md");
  const std::string json_path = join(base.paths.metrics_dir, base.run_id + "-ablation.json");
  std::ofstream(md_path) << md.str();
  std::ofstream(json_path) << doc.dump(2) << "\n";
  return md.str();
}

}  // namespace nl2code
