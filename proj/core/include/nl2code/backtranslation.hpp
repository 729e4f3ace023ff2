#pragma once

#include <map>
#include <string>
#include <vector>

#include "nl2code/data.hpp"
#include "nl2code/optim.hpp"
#include "nl2code/transformer.hpp"

namespace nl2code {

// A sequence of vocabulary distributions — the differentiable stand-in for a
// discrete token sequence. Row j mixes the embedding table as sum_i p_i e_i.
struct SoftSequence {
  Tensor dists;        // [L x V], rows sum to 1, graph-connected
  int stop_length = 0; // rows produced before argmax hit eos (eos row included), == L
};

// F translates text to code, G translates code to text. Their vocabularies
// cross: F's source is G's target and vice versa.
struct DualModel {
  TransformerModel F;
  TransformerModel G;

  DualModel(const TransformerConfig& text_to_code, const TransformerConfig& code_to_text,
            Rng& init_rng);

  // Union view with "F." / "G." name prefixes, for the shared optimizer and
  // checkpoints.
  std::vector<std::pair<std::string, Tensor>> all_parameters() const;
};

enum class BackTransMode { ctc, ctc_noise, tct, cycle };

struct BackTransConfig {
  BackTransMode mode = BackTransMode::ctc;
  double alpha = 0.1;        // reconstruction-loss weight
  double noise_sigma = 0.05; // ctc_noise only
  int soft_max_len = 32;

  void validate() const;
};

const char* to_string(BackTransMode mode);

// One structured record per training step. Components hold weighted
// contributions, so their sum equals total exactly.
struct StepReport {
  long long step = 0;
  std::string mode;
  std::map<std::string, double> components;
  double total = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

// Autoregressive soft decoding: step j re-decodes the soft-embedded prefix
// (bos embedding at step 0), softmaxes the last logit row into distribution
// row j, and feeds its expected embedding back. Stops once the row's argmax
// is eos — argmax decides stopping only and carries no gradient — or at
// soft_max_len rows. Requires gradient recording to be on.
SoftSequence generate_soft(const TransformerModel& model, const std::vector<int>& src_ids,
                           int soft_max_len, bool train = false, Rng* dropout_rng = nullptr);

// Perturbs log(p + 1e-10) with N(0, sigma) noise and re-normalizes through
// softmax; rows stay valid distributions and gradients flow to the input.
// sigma = 0 returns the input unchanged.
SoftSequence add_noise(const SoftSequence& seq, double sigma, Rng& noise_rng);

// Optimizer bundle shared by the step functions.
struct StepOptimizer {
  AdamState& state;
  double lr = 0.001;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Code -> G -> soft text (-> noise when mode is ctc_noise) -> F teacher-forced
// on the original code: reconstruction loss L_rec over the code batch, plus
// F's supervised loss L_sup over the annotated batch; total = L_sup +
// alpha * L_rec, one backward and Adam step over both models. alpha = 0 skips
// the reconstruction branch entirely, so G receives exactly zero gradient.
StepReport ctc_step(DualModel& dual, const Batch& code_batch, const Batch& annotated_batch,
                    const BackTransConfig& cfg, StepOptimizer opt, long long step,
                    Rng* dropout_rng = nullptr, Rng* noise_rng = nullptr);

// Mirror image: text -> F -> soft code -> G reconstructs the text; the
// supervised loss trains G's annotated code -> text direction.
StepReport tct_step(DualModel& dual, const Batch& text_batch, const Batch& annotated_batch,
                    const BackTransConfig& cfg, StepOptimizer opt, long long step,
                    Rng* dropout_rng = nullptr, Rng* noise_rng = nullptr);

// Both directions at once on two independently drawn paired batches, plus
// ground-truth supervision of each soft intermediate against its paired
// sequence. Components: rec_code and rec_text (weighted by alpha), sup_code
// and sup_text (weight 1); total is their sum.
StepReport cycle_step(DualModel& dual, const Batch& text_batch, const Batch& code_batch,
                      const BackTransConfig& cfg, StepOptimizer opt, long long step,
                      Rng* dropout_rng = nullptr);

}  // namespace nl2code
