#include "nl2code/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nl2code {

namespace {

double normalized_score(const BeamHypothesis& h, double power) {
  // Generated tokens only: bos is given, not predicted.
  const double n = std::max<double>(1.0, static_cast<double>(h.tokens.size()) - 1.0);
  return h.logprob / std::pow(n, power);
}

std::vector<int> strip_frame(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (int id : tokens) {
    if (id == kBosId || id == kEosId) continue;
    out.push_back(id);
  }
  return out;
}

}  // namespace

std::vector<int> beam_search(const StepScorer& score_step, int vocab_size, int beam,
                             int max_gen_len, double length_norm_power) {
  if (beam < 1) throw std::invalid_argument("beam_search: beam must be >= 1");
  if (max_gen_len < 1) throw std::invalid_argument("beam_search: max_gen_len must be >= 1");

  std::vector<BeamHypothesis> live(1);
  live[0].tokens = {kBosId};
  std::vector<BeamHypothesis> finished;

  for (int step = 0; step < max_gen_len && !live.empty(); ++step) {
    struct Candidate {
      std::size_t parent;
      int token;
      double logprob;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * beam);
    for (std::size_t p = 0; p < live.size(); ++p) {
      const std::vector<double> logprobs = score_step(live[p].tokens);
      if (static_cast<int>(logprobs.size()) != vocab_size) {
        throw std::runtime_error("beam_search: scorer returned " +
                                 std::to_string(logprobs.size()) + " entries for vocab of " +
                                 std::to_string(vocab_size));
      }
      // Top-beam next tokens for this parent, ties toward the lower id.
      std::vector<int> ids(vocab_size);
      for (int i = 0; i < vocab_size; ++i) ids[i] = i;
      const int k = std::min(beam, vocab_size);
      std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), [&](int a, int b) {
        if (logprobs[a] != logprobs[b]) return logprobs[a] > logprobs[b];
        return a < b;
      });
      for (int i = 0; i < k; ++i) {
        candidates.push_back({p, ids[i], live[p].logprob + logprobs[ids[i]]});
      }
    }
    const std::size_t keep = std::min<std::size_t>(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<BeamHypothesis> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      BeamHypothesis h = live[candidates[i].parent];
      h.tokens.push_back(candidates[i].token);
      h.logprob = candidates[i].logprob;
      if (candidates[i].token == kEosId) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next_live.push_back(std::move(h));
      }
    }
    live.swap(next_live);
  }

  const std::vector<BeamHypothesis>& pool = finished.empty() ? live : finished;
  if (pool.empty()) throw std::runtime_error("beam_search: no hypothesis survived");
  const BeamHypothesis* best = &pool[0];
  for (const BeamHypothesis& h : pool) {
    if (normalized_score(h, length_norm_power) > normalized_score(*best, length_norm_power)) {
      best = &h;
    }
  }
  return strip_frame(best->tokens);
}

StepScorer transformer_step_scorer(const TransformerModel& model,
                                   const std::vector<int>& src_ids) {
  Tensor memory;
  std::vector<bool> memory_pad;
  {
    NoGradGuard guard;
    memory = model.encode(src_ids);
    memory_pad = TransformerModel::pad_mask_of(src_ids);
  }
  return [&model, memory, memory_pad](const std::vector<int>& prefix) {
    NoGradGuard guard;
    const Tensor logits = model.decode_teacher_forced(prefix, memory, memory_pad);
    const int v = logits.cols();
    const int last = logits.rows() - 1;
    std::vector<double> row(v);
    double mx = logits.at(last, 0);
    for (int i = 1; i < v; ++i) mx = std::max(mx, logits.at(last, i));
    double total = 0.0;
    for (int i = 0; i < v; ++i) total += std::exp(logits.at(last, i) - mx);
    const double log_z = mx + std::log(total);
    for (int i = 0; i < v; ++i) row[i] = logits.at(last, i) - log_z;
    return row;
  };
}

std::vector<int> beam_decode(const TransformerModel& model, const std::vector<int>& src_ids,
                             int beam, int max_gen_len) {
  const int cap = std::min(max_gen_len, model.config().max_len - 1);
  return beam_search(transformer_step_scorer(model, src_ids), model.config().tgt_vocab, beam,
                     cap);
}

}  // namespace nl2code
