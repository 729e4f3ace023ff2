#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nl2code/ops.hpp"
#include "nl2code/rng.hpp"
#include "nl2code/tensor.hpp"
#include "nl2code/token_ids.hpp"

namespace nl2code {

struct TransformerConfig {
  int num_layers = 1;
  int num_heads = 8;
  int d_model = 128;
  int d_ff = 512;
  double dropout = 0.2;
  int src_vocab = 4000;
  int tgt_vocab = 4000;
  int max_len = 128;

  // Throws ValidationError on impossible values. num_layers == 0 is allowed
  // here (an empty stack is a useful test configuration: the encoder then
  // returns embeddings + positional encoding); run-level validation insists
  // on >= 1.
  void validate() const;

  // Closed-form trainable-parameter count:
  //   embeddings  (src_vocab + tgt_vocab) * d_model
  //   out proj    d_model * tgt_vocab
  //   enc layer   4*d^2            (Wq,Wk,Wv,Wo)
  //             + 2*d*d_ff + d_ff + d   (feed-forward with biases)
  //             + 4*d              (two norms, gain+bias each)
  //   dec layer   8*d^2 + 2*d*d_ff + d_ff + d + 6*d   (two attentions, three norms)
  long long param_count() const;
};

// Fixed sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d_model)),
// PE[pos, 2i+1] = cos(pos / 10000^(2i/d_model)). Throws on odd d_model.
Tensor positional_encoding(int max_len, int d_model);

// Boolean (query, key) admissibility matrix. Disallowed pairs receive a -1e30
// additive bias before softmax, which underflows to an exact zero weight, so
// masked keys cannot leak into the output even at the last bit.
struct AttentionMask {
  enum class Kind { padding, causal, combined };
  Kind kind = Kind::padding;
  int tq = 0;
  int tk = 0;
  std::vector<std::uint8_t> allowed;  // row-major tq x tk

  bool at(int q, int k) const { return allowed[static_cast<std::size_t>(q) * tk + k] != 0; }

  // Every key visible to every query (a padding mask with no pads).
  static AttentionMask none(int tq, int tk);
  // Key positions flagged pad are hidden from all queries.
  static AttentionMask padding(int tq, const std::vector<bool>& key_is_pad);
  // Query j sees keys 0..j only.
  static AttentionMask causal(int t);
  // Causal and pad-hiding at once (decoder self-attention over padded rows).
  static AttentionMask combined(const std::vector<bool>& key_is_pad);
};

// Scaled dot-product attention with `heads` heads: per head h,
// softmax(Q_h K_h^T / sqrt(d_model/heads) + mask bias) V_h; heads are
// concatenated and projected by w_o. Projections carry no bias. Throws when a
// query row has no attendable key.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                            const Tensor& w_o, const AttentionMask& mask, int heads);

// Row j of dists is a probability distribution over the table's rows; the
// result row is the expected embedding sum_i p_i * e_i. Validates that rows
// sum to 1 within 1e-6 with non-negative entries.
Tensor soft_embed(const Tensor& dists, const Tensor& table);

// Encoder-decoder transformer over single (possibly padded) sequences.
// Post-norm residual blocks; embeddings scaled by sqrt(d_model) before the
// positional encoding is added. All methods are const: forward passes build
// graphs but never mutate parameters (the optimizer does that externally).
class TransformerModel {
 public:
  TransformerModel(const TransformerConfig& cfg, Rng& init_rng);

  const TransformerConfig& config() const { return cfg_; }
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor& param(const std::string& name);  // throws std::out_of_range on unknown name
  const Tensor& param(const std::string& name) const { return cparam(name); }
  const Tensor& positional_table() const { return pe_; }

  static std::vector<bool> pad_mask_of(const std::vector<int>& ids);

  // Token-id encoder input. Pad positions are hidden as attention keys.
  Tensor encode(const std::vector<int>& src_ids, bool train = false,
                Rng* dropout_rng = nullptr) const;
  // Distribution-sequence encoder input (rows of dists sum to 1).
  Tensor encode_soft(const Tensor& dists, bool train = false, Rng* dropout_rng = nullptr) const;

  // Teacher-forced decoder: causal self-attention over tgt_in (pad-aware),
  // cross-attention over memory with src pads hidden; returns one logit row
  // per input position.
  Tensor decode_teacher_forced(const std::vector<int>& tgt_in, const Tensor& memory,
                               const std::vector<bool>& memory_key_pad, bool train = false,
                               Rng* dropout_rng = nullptr) const;
  // Same decoder over pre-embedded input rows (soft decoding feedback path);
  // tgt_embed holds raw embedding mixtures, scaling and position encoding
  // happen inside. No pad hiding on the target side.
  Tensor decode_from_embedded(const Tensor& tgt_embed, const Tensor& memory,
                              const std::vector<bool>& memory_key_pad, bool train = false,
                              Rng* dropout_rng = nullptr) const;

  // Mean cross-entropy of next-token prediction: decoder consumes
  // tgt[0..n-2], targets are tgt[1..n-1], pad targets excluded.
  Tensor forward_nll(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
                     bool train = false, Rng* dropout_rng = nullptr) const;

 private:
  Tensor embed_positions(const Tensor& raw_embed, bool train, Rng* rng) const;
  Tensor encoder_stack(Tensor x, const AttentionMask& self_mask, bool train, Rng* rng) const;
  Tensor decoder_stack(Tensor x, const AttentionMask& self_mask, const Tensor& memory,
                       const AttentionMask& cross_mask, bool train, Rng* rng) const;
  Tensor sublayer(const Tensor& x, const Tensor& inner, const std::string& norm_prefix,
                  bool train, Rng* rng) const;
  Tensor feed_forward(const Tensor& x, const std::string& prefix) const;
  const Tensor& cparam(const std::string& name) const;

  TransformerConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;  // registration order
  std::unordered_map<std::string, std::size_t> index_;  // name -> position
  Tensor pe_;
};

}  // namespace nl2code
