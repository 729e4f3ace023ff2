#include "nl2code/backtranslation.hpp"

#include <cmath>
#include <stdexcept>

#include "nl2code/errors.hpp"

namespace nl2code {

DualModel::DualModel(const TransformerConfig& text_to_code, const TransformerConfig& code_to_text,
                     Rng& init_rng)
    : F(text_to_code, init_rng), G(code_to_text, init_rng) {
  if (F.config().src_vocab != G.config().tgt_vocab ||
      F.config().tgt_vocab != G.config().src_vocab) {
    throw ValidationError("dual model: F and G vocabularies must cross (F.src == G.tgt and "
                          "F.tgt == G.src)");
  }
}

std::vector<std::pair<std::string, Tensor>> DualModel::all_parameters() const {
  std::vector<std::pair<std::string, Tensor>> all;
  all.reserve(F.parameters().size() + G.parameters().size());
  for (const auto& [name, p] : F.parameters()) all.emplace_back("F." + name, p);
  for (const auto& [name, p] : G.parameters()) all.emplace_back("G." + name, p);
  return all;
}

void BackTransConfig::validate() const {
  if (alpha < 0.0) throw ValidationError("backtrans: alpha must be >= 0");
  if (noise_sigma < 0.0) throw ValidationError("backtrans: noise_sigma must be >= 0");
  if (soft_max_len < 1) throw ValidationError("backtrans: soft_max_len must be >= 1");
}

const char* to_string(BackTransMode mode) {
  switch (mode) {
    case BackTransMode::ctc: return "ctc";
    case BackTransMode::ctc_noise: return "ctc-noise";
    case BackTransMode::tct: return "tct";
    case BackTransMode::cycle: return "cycle";
  }
  return "unknown";
}

SoftSequence generate_soft(const TransformerModel& model, const std::vector<int>& src_ids,
                           int soft_max_len, bool train, Rng* dropout_rng) {
  if (soft_max_len < 1) {
    throw std::invalid_argument("generate_soft: soft_max_len must be >= 1");
  }
  if (soft_max_len > model.config().max_len) {
    throw std::invalid_argument("generate_soft: soft_max_len " + std::to_string(soft_max_len) +
                                " exceeds model max_len " +
                                std::to_string(model.config().max_len));
  }
  if (!grad_enabled()) {
    throw std::logic_error("generate_soft: gradient recording must be on");
  }

  const Tensor memory = model.encode(src_ids, train, dropout_rng);
  const std::vector<bool> memory_pad = TransformerModel::pad_mask_of(src_ids);
  const Tensor& tgt_embed = model.param("tgt_embed");

  std::vector<Tensor> embed_rows = {gather_rows(tgt_embed, {kBosId})};
  std::vector<Tensor> dist_rows;
  for (int j = 0; j < soft_max_len; ++j) {
    const Tensor prefix = embed_rows.size() == 1 ? embed_rows[0] : concat_rows(embed_rows);
    const Tensor logits =
        model.decode_from_embedded(prefix, memory, memory_pad, train, dropout_rng);
    const Tensor dist = softmax(slice_rows(logits, logits.rows() - 1, 1));
    dist_rows.push_back(dist);
    // The stopping decision reads values only — no gradient flows through it.
    const auto& row = dist.values();
    int argmax = 0;
    for (int i = 1; i < static_cast<int>(row.size()); ++i) {
      if (row[i] > row[argmax]) argmax = i;
    }
    if (argmax == kEosId) break;
    embed_rows.push_back(soft_embed(dist, tgt_embed));
  }

  SoftSequence out;
  out.dists = dist_rows.size() == 1 ? dist_rows[0] : concat_rows(dist_rows);
  out.stop_length = static_cast<int>(dist_rows.size());
  return out;
}

SoftSequence add_noise(const SoftSequence& seq, double sigma, Rng& noise_rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
  if (sigma == 0.0) return seq;
  const Tensor eps = Tensor::full(seq.dists.shape(), 1e-10);
  const Tensor log_p = log(add(seq.dists, eps));
  std::vector<double> noise(seq.dists.numel());
  for (double& n : noise) n = sigma * noise_rng.normal();
  const Tensor perturbed = add(log_p, Tensor::from(seq.dists.shape(), std::move(noise)));
  SoftSequence out;
  out.dists = softmax(perturbed);
  out.stop_length = seq.stop_length;
  return out;
}

namespace {

// Soft source through the consumer's encoder, decoder teacher-forced on the
// original (framed, possibly padded) target row.
Tensor reconstruction_nll(const TransformerModel& consumer, const Tensor& soft_src,
                          const std::vector<int>& target_row, bool train, Rng* rng) {
  const Tensor memory = consumer.encode_soft(soft_src, train, rng);
  const std::vector<bool> no_pad(memory.rows(), false);
  const std::vector<int> dec_in(target_row.begin(), target_row.end() - 1);
  const std::vector<int> targets(target_row.begin() + 1, target_row.end());
  const Tensor logits = consumer.decode_teacher_forced(dec_in, memory, no_pad, train, rng);
  return cross_entropy(logits, targets, kPadId);
}

// Cross-entropy of the soft intermediate against its paired ground truth:
// generated row j predicts the paired sequence's token j+1 (bos excluded),
// capped at the shorter of the two lengths.
Tensor intermediate_nll(const SoftSequence& seq, const std::vector<int>& paired_row) {
  std::vector<int> targets(paired_row.begin() + 1, paired_row.end());
  const int cap = std::min<int>(seq.dists.rows(), static_cast<int>(targets.size()));
  targets.resize(cap);
  const Tensor dists = cap == seq.dists.rows() ? seq.dists : slice_rows(seq.dists, 0, cap);
  return nll_from_probs(dists, targets, kPadId);
}

Tensor weighted_mean(const std::vector<Tensor>& losses, const std::vector<double>& weights) {
  const double inv_b = 1.0 / static_cast<double>(losses.size());
  Tensor acc = scale(losses[0], weights[0] * inv_b);
  for (std::size_t i = 1; i < losses.size(); ++i) {
    acc = add(acc, scale(losses[i], weights[i] * inv_b));
  }
  return acc;
}

StepReport finish_step(DualModel& dual, Tensor total, std::map<std::string, double> components,
                       const BackTransConfig& cfg, StepOptimizer& opt, long long step) {
  backward(total);
  auto params = dual.all_parameters();
  const double grad_norm = clip_global_norm(params, opt.clip_norm);
  adam_step(params, opt.state, opt.lr);
  StepReport report;
  report.step = step;
  report.mode = to_string(cfg.mode);
  report.components = std::move(components);
  report.total = total.value();
  report.lr = opt.lr;
  report.grad_norm = grad_norm;
  return report;
}

StepReport reconstruction_direction_step(DualModel& dual, const TransformerModel& generator,
                                         const TransformerModel& consumer,
                                         const Batch& rec_batch, bool rec_on_tgt_side,
                                         const Batch& annotated_batch, bool sup_swapped,
                                         const char* rec_name, const char* sup_name,
                                         const BackTransConfig& cfg, StepOptimizer opt,
                                         long long step, Rng* dropout_rng, Rng* noise_rng) {
  std::map<std::string, double> components;
  Tensor total;
  bool have_total = false;

  if (annotated_batch.size() > 0) {
    std::vector<Tensor> losses;
    for (int r = 0; r < annotated_batch.size(); ++r) {
      // Supervised pass of the task model: F text->code, or G code->text
      // when the direction is swapped.
      const auto& src = sup_swapped ? annotated_batch.tgt[r] : annotated_batch.src[r];
      const auto& tgt = sup_swapped ? annotated_batch.src[r] : annotated_batch.tgt[r];
      losses.push_back((sup_swapped ? dual.G : dual.F).forward_nll(src, tgt, true, dropout_rng));
    }
    total = weighted_mean(losses, annotated_batch.weights);
    have_total = true;
    components[sup_name] = total.value();
  } else {
    components[sup_name] = 0.0;
  }

  if (cfg.alpha > 0.0 && rec_batch.size() > 0) {
    std::vector<Tensor> losses;
    for (int r = 0; r < rec_batch.size(); ++r) {
      const auto& seq = rec_on_tgt_side ? rec_batch.tgt[r] : rec_batch.src[r];
      SoftSequence soft = generate_soft(generator, seq, cfg.soft_max_len, true, dropout_rng);
      if (cfg.mode == BackTransMode::ctc_noise && cfg.noise_sigma > 0.0) {
        if (noise_rng == nullptr) {
          throw std::invalid_argument("ctc_step: noise mode needs a noise RNG");
        }
        soft = add_noise(soft, cfg.noise_sigma, *noise_rng);
      }
      losses.push_back(reconstruction_nll(consumer, soft.dists, seq, true, dropout_rng));
    }
    const Tensor rec = scale(weighted_mean(losses, rec_batch.weights), cfg.alpha);
    components[rec_name] = rec.value();
    total = have_total ? add(total, rec) : rec;
    have_total = true;
  } else {
    components[rec_name] = 0.0;
  }

  if (!have_total) {
    throw ValidationError(std::string(to_string(cfg.mode)) +
                          "_step: nothing to optimize (no annotated rows and no usable "
                          "reconstruction rows)");
  }
  return finish_step(dual, total, std::move(components), cfg, opt, step);
}

}  // namespace

StepReport ctc_step(DualModel& dual, const Batch& code_batch, const Batch& annotated_batch,
                    const BackTransConfig& cfg, StepOptimizer opt, long long step,
                    Rng* dropout_rng, Rng* noise_rng) {
  cfg.validate();
  if (cfg.mode != BackTransMode::ctc && cfg.mode != BackTransMode::ctc_noise) {
    throw std::invalid_argument("ctc_step: mode must be ctc or ctc-noise");
  }
  // code -> G -> soft text -> F back to code; supervision on F.
  return reconstruction_direction_step(dual, dual.G, dual.F, code_batch, /*rec_on_tgt_side=*/true,
                                       annotated_batch, /*sup_swapped=*/false, "rec_code",
                                       "sup_code", cfg, opt, step, dropout_rng, noise_rng);
}

StepReport tct_step(DualModel& dual, const Batch& text_batch, const Batch& annotated_batch,
                    const BackTransConfig& cfg, StepOptimizer opt, long long step,
                    Rng* dropout_rng, Rng* noise_rng) {
  cfg.validate();
  if (cfg.mode != BackTransMode::tct) {
    throw std::invalid_argument("tct_step: mode must be tct");
  }
  // text -> F -> soft code -> G back to text; supervision on G.
  return reconstruction_direction_step(dual, dual.F, dual.G, text_batch, /*rec_on_tgt_side=*/false,
                                       annotated_batch, /*sup_swapped=*/true, "rec_text",
                                       "sup_text", cfg, opt, step, dropout_rng, noise_rng);
}

StepReport cycle_step(DualModel& dual, const Batch& text_batch, const Batch& code_batch,
                      const BackTransConfig& cfg, StepOptimizer opt, long long step,
                      Rng* dropout_rng) {
  cfg.validate();
  if (cfg.mode != BackTransMode::cycle) {
    throw std::invalid_argument("cycle_step: mode must be cycle");
  }
  if (text_batch.size() == 0 && code_batch.size() == 0) {
    throw ValidationError("cycle_step: both batches are empty");
  }

  std::map<std::string, double> components;
  components["rec_code"] = components["rec_text"] = 0.0;
  components["sup_code"] = components["sup_text"] = 0.0;
  std::vector<Tensor> terms;

  // One cycle direction: seq -> generator -> soft intermediate; the consumer
  // reconstructs seq, and the intermediate is supervised against its pair.
  const auto direction = [&](const TransformerModel& generator, const TransformerModel& consumer,
                             const Batch& batch, bool seq_on_tgt_side, const char* rec_name,
                             const char* sup_name) {
    if (batch.size() == 0) return;
    std::vector<Tensor> rec_losses, sup_losses;
    for (int r = 0; r < batch.size(); ++r) {
      const auto& seq = seq_on_tgt_side ? batch.tgt[r] : batch.src[r];
      const auto& pair = seq_on_tgt_side ? batch.src[r] : batch.tgt[r];
      const SoftSequence soft = generate_soft(generator, seq, cfg.soft_max_len, true, dropout_rng);
      if (cfg.alpha > 0.0) {
        rec_losses.push_back(reconstruction_nll(consumer, soft.dists, seq, true, dropout_rng));
      }
      sup_losses.push_back(intermediate_nll(soft, pair));
    }
    if (cfg.alpha > 0.0) {
      terms.push_back(scale(weighted_mean(rec_losses, batch.weights), cfg.alpha));
      components[rec_name] = terms.back().value();
    }
    terms.push_back(weighted_mean(sup_losses, batch.weights));
    components[sup_name] = terms.back().value();
  };

  // code -> G -> soft text, F reconstructs; text -> F -> soft code, G
  // reconstructs.
  direction(dual.G, dual.F, code_batch, /*seq_on_tgt_side=*/true, "rec_code", "sup_text");
  direction(dual.F, dual.G, text_batch, /*seq_on_tgt_side=*/false, "rec_text", "sup_code");

  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return finish_step(dual, total, std::move(components), cfg, opt, step);
}

}  // namespace nl2code
