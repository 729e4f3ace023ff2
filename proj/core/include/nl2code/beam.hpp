#pragma once

#include <functional>
#include <vector>

#include "nl2code/transformer.hpp"

namespace nl2code {

struct BeamHypothesis {
  std::vector<int> tokens;  // bos-rooted
  double logprob = 0.0;     // sum of token log-probabilities
  bool finished = false;    // last token is eos
};

// Given a bos-rooted prefix, returns log-probabilities over the next token
// (one entry per vocabulary id). Keeping the scorer abstract lets tests drive
// beam search with hand-built tables.
using StepScorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

// Standard beam search. Live hypotheses are pruned by raw cumulative
// log-probability; finished hypotheses are pooled and the winner is chosen by
// length-normalized score logprob / n^length_norm_power, n counting generated
// tokens (eos included, bos not). Ties break toward the lower token id, so
// decoding is deterministic. Returns the winner with bos/eos stripped; falls
// back to the best unfinished hypothesis when nothing finished within
// max_gen_len generated tokens. Throws on beam < 1.
std::vector<int> beam_search(const StepScorer& score_step, int vocab_size, int beam,
                             int max_gen_len, double length_norm_power = 0.6);

// Scorer over a trained model: precomputes the encoder memory once, then
// re-decodes each prefix teacher-forced and log-softmaxes the last logit row.
// Runs entirely under a no-grad guard.
StepScorer transformer_step_scorer(const TransformerModel& model, const std::vector<int>& src_ids);

// encode + beam_search + strip, capped so bos plus the generated tokens never
// exceed the model's max_len.
std::vector<int> beam_decode(const TransformerModel& model, const std::vector<int>& src_ids,
                             int beam, int max_gen_len);

}  // namespace nl2code
