#include "nl2code/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include "nl2code/errors.hpp"

namespace nl2code {

namespace {

constexpr double kMaskBias = -1e30;  // exp() underflows to exactly 0 after softmax

}  // namespace

void TransformerConfig::validate() const {
  if (num_layers < 0) throw ValidationError("model: num_layers must be >= 0");
  if (num_heads < 1) throw ValidationError("model: num_heads must be positive");
  if (d_model < 1) throw ValidationError("model: d_model must be positive");
  if (d_model % 2 != 0) throw ValidationError("model: d_model must be even for the positional encoding");
  if (d_model % num_heads != 0) {
    throw ValidationError("model: d_model " + std::to_string(d_model) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (d_ff < 1) throw ValidationError("model: d_ff must be positive");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ValidationError("model: dropout must lie in [0, 1), got " + std::to_string(dropout));
  }
  if (src_vocab <= kUnkId || tgt_vocab <= kUnkId) {
    throw ValidationError("model: vocabulary sizes must exceed the 4 special ids");
  }
  if (max_len < 1) throw ValidationError("model: max_len must be positive");
}

long long TransformerConfig::param_count() const {
  const long long d = d_model, ff = d_ff, L = num_layers;
  const long long embeddings = (static_cast<long long>(src_vocab) + tgt_vocab) * d;
  const long long out_proj = d * tgt_vocab;
  const long long enc_layer = 4 * d * d + 2 * d * ff + ff + d + 4 * d;
  const long long dec_layer = 8 * d * d + 2 * d * ff + ff + d + 6 * d;
  return embeddings + out_proj + L * (enc_layer + dec_layer);
}

Tensor positional_encoding(int max_len, int d_model) {
  if (d_model % 2 != 0) {
    throw std::invalid_argument("positional_encoding: d_model must be even, got " +
                                std::to_string(d_model));
  }
  std::vector<double> values(static_cast<std::size_t>(max_len) * d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * i) / d_model);
      values[static_cast<std::size_t>(pos) * d_model + 2 * i] = std::sin(angle);
      values[static_cast<std::size_t>(pos) * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({max_len, d_model}, std::move(values));
}

AttentionMask AttentionMask::none(int tq, int tk) {
  AttentionMask m;
  m.kind = Kind::padding;
  m.tq = tq;
  m.tk = tk;
  m.allowed.assign(static_cast<std::size_t>(tq) * tk, 1);
  return m;
}

AttentionMask AttentionMask::padding(int tq, const std::vector<bool>& key_is_pad) {
  AttentionMask m;
  m.kind = Kind::padding;
  m.tq = tq;
  m.tk = static_cast<int>(key_is_pad.size());
  m.allowed.assign(static_cast<std::size_t>(m.tq) * m.tk, 0);
  for (int q = 0; q < m.tq; ++q) {
    for (int k = 0; k < m.tk; ++k) {
      m.allowed[static_cast<std::size_t>(q) * m.tk + k] = key_is_pad[k] ? 0 : 1;
    }
  }
  return m;
}

AttentionMask AttentionMask::causal(int t) {
  AttentionMask m;
  m.kind = Kind::causal;
  m.tq = m.tk = t;
  m.allowed.assign(static_cast<std::size_t>(t) * t, 0);
  for (int q = 0; q < t; ++q) {
    for (int k = 0; k <= q; ++k) m.allowed[static_cast<std::size_t>(q) * t + k] = 1;
  }
  return m;
}

AttentionMask AttentionMask::combined(const std::vector<bool>& key_is_pad) {
  const int t = static_cast<int>(key_is_pad.size());
  AttentionMask m = causal(t);
  m.kind = Kind::combined;
  for (int q = 0; q < t; ++q) {
    for (int k = 0; k <= q; ++k) {
      if (key_is_pad[k]) m.allowed[static_cast<std::size_t>(q) * t + k] = 0;
    }
  }
  return m;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& k_in, const Tensor& v_in,
                            const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                            const Tensor& w_o, const AttentionMask& mask, int heads) {
  const int d = q_in.cols();
  if (k_in.cols() != d || v_in.cols() != d) {
    throw std::invalid_argument("multi_head_attention: input widths disagree: " +
                                q_in.shape_str() + ", " + k_in.shape_str() + ", " +
                                v_in.shape_str());
  }
  if (k_in.rows() != v_in.rows()) {
    throw std::invalid_argument("multi_head_attention: key/value lengths disagree");
  }
  if (heads < 1 || d % heads != 0) {
    throw std::invalid_argument("multi_head_attention: " + std::to_string(heads) +
                                " heads do not divide width " + std::to_string(d));
  }
  const int tq = q_in.rows(), tk = k_in.rows();
  if (mask.tq != tq || mask.tk != tk) {
    throw std::invalid_argument("multi_head_attention: mask is " + std::to_string(mask.tq) + "x" +
                                std::to_string(mask.tk) + " but inputs need " + std::to_string(tq) +
                                "x" + std::to_string(tk));
  }
  std::vector<double> bias_values(static_cast<std::size_t>(tq) * tk, 0.0);
  for (int q = 0; q < tq; ++q) {
    bool attendable = false;
    for (int k = 0; k < tk; ++k) {
      if (mask.at(q, k)) {
        attendable = true;
      } else {
        bias_values[static_cast<std::size_t>(q) * tk + k] = kMaskBias;
      }
    }
    if (!attendable) {
      throw std::runtime_error("multi_head_attention: query position " + std::to_string(q) +
                               " has no attendable key");
    }
  }
  const Tensor bias = Tensor::from({tq, tk}, std::move(bias_values));

  const Tensor q_proj = matmul(q_in, w_q);
  const Tensor k_proj = matmul(k_in, w_k);
  const Tensor v_proj = matmul(v_in, w_v);
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q_proj, h * dh, dh);
    const Tensor kh = slice_cols(k_proj, h * dh, dh);
    const Tensor vh = slice_cols(v_proj, h * dh, dh);
    const Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    const Tensor weights = softmax(add(scores, bias));
    head_outputs.push_back(matmul(weights, vh));
  }
  return matmul(heads == 1 ? head_outputs[0] : concat_cols(head_outputs), w_o);
}

Tensor soft_embed(const Tensor& dists, const Tensor& table) {
  if (dists.ndim() != 2 || table.ndim() != 2 || dists.cols() != table.rows()) {
    throw std::invalid_argument("soft_embed: " + dists.shape_str() +
                                " is not a distribution sequence over a " + table.shape_str() +
                                " table");
  }
  const int L = dists.rows(), V = dists.cols();
  const auto& dv = dists.values();
  for (int j = 0; j < L; ++j) {
    double row_sum = 0.0;
    for (int i = 0; i < V; ++i) {
      const double p = dv[static_cast<std::size_t>(j) * V + i];
      if (p < -1e-12) {
        throw std::invalid_argument("soft_embed: negative probability at row " +
                                    std::to_string(j));
      }
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw std::invalid_argument("soft_embed: row " + std::to_string(j) + " sums to " +
                                  std::to_string(row_sum) + ", not 1");
    }
  }
  return matmul(dists, table);
}

TransformerModel::TransformerModel(const TransformerConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  const int d = cfg_.d_model;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));

  auto add_matrix = [&](const std::string& name, int rows, int cols) {
    std::vector<double> values(static_cast<std::size_t>(rows) * cols);
    for (double& v : values) v = init_rng.uniform(-bound, bound);
    Tensor t = Tensor::from({rows, cols}, std::move(values));
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.emplace_back(name, t);
  };
  auto add_vector = [&](const std::string& name, int n, double fill) {
    Tensor t = Tensor::full({n}, fill);
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.emplace_back(name, t);
  };
  auto add_attention = [&](const std::string& prefix) {
    add_matrix(prefix + ".Wq", d, d);
    add_matrix(prefix + ".Wk", d, d);
    add_matrix(prefix + ".Wv", d, d);
    add_matrix(prefix + ".Wo", d, d);
  };
  auto add_norm = [&](const std::string& prefix) {
    add_vector(prefix + ".gamma", d, 1.0);
    add_vector(prefix + ".beta", d, 0.0);
  };
  auto add_ffn = [&](const std::string& prefix) {
    add_matrix(prefix + ".W1", d, cfg_.d_ff);
    add_vector(prefix + ".b1", cfg_.d_ff, 0.0);
    add_matrix(prefix + ".W2", cfg_.d_ff, d);
    add_vector(prefix + ".b2", d, 0.0);
  };

  add_matrix("src_embed", cfg_.src_vocab, d);
  add_matrix("tgt_embed", cfg_.tgt_vocab, d);
  for (int i = 0; i < cfg_.num_layers; ++i) {
    const std::string layer = "enc.layer" + std::to_string(i);
    add_attention(layer + ".attn");
    add_norm(layer + ".norm1");
    add_ffn(layer + ".ffn");
    add_norm(layer + ".norm2");
  }
  for (int i = 0; i < cfg_.num_layers; ++i) {
    const std::string layer = "dec.layer" + std::to_string(i);
    add_attention(layer + ".self_attn");
    add_norm(layer + ".norm1");
    add_attention(layer + ".cross_attn");
    add_norm(layer + ".norm2");
    add_ffn(layer + ".ffn");
    add_norm(layer + ".norm3");
  }
  add_matrix("out_proj", d, cfg_.tgt_vocab);

  pe_ = positional_encoding(cfg_.max_len, d);
}

Tensor& TransformerModel::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("TransformerModel: no parameter named \"" + name + "\"");
  }
  return params_[it->second].second;
}

const Tensor& TransformerModel::cparam(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("TransformerModel: no parameter named \"" + name + "\"");
  }
  return params_[it->second].second;
}

std::vector<bool> TransformerModel::pad_mask_of(const std::vector<int>& ids) {
  std::vector<bool> mask(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) mask[i] = ids[i] == kPadId;
  return mask;
}

namespace {

Tensor maybe_dropout(const Tensor& t, double p, bool train, Rng* rng) {
  if (!train || p == 0.0) return t;
  if (rng == nullptr) {
    throw std::invalid_argument("transformer: training with dropout requires a dropout RNG");
  }
  return dropout(t, p, *rng, true);
}

}  // namespace

Tensor TransformerModel::embed_positions(const Tensor& raw_embed, bool train, Rng* rng) const {
  const int T = raw_embed.rows();
  const Tensor scaled = scale(raw_embed, std::sqrt(static_cast<double>(cfg_.d_model)));
  const Tensor positioned = add(scaled, slice_rows(pe_, 0, T));
  return maybe_dropout(positioned, cfg_.dropout, train, rng);
}

Tensor TransformerModel::sublayer(const Tensor& x, const Tensor& inner,
                                  const std::string& norm_prefix, bool train, Rng* rng) const {
  const Tensor residual = add(x, maybe_dropout(inner, cfg_.dropout, train, rng));
  return layer_norm(residual, cparam(norm_prefix + ".gamma"), cparam(norm_prefix + ".beta"));
}

Tensor TransformerModel::feed_forward(const Tensor& x, const std::string& prefix) const {
  const Tensor hidden = relu(add(matmul(x, cparam(prefix + ".W1")), cparam(prefix + ".b1")));
  return add(matmul(hidden, cparam(prefix + ".W2")), cparam(prefix + ".b2"));
}

Tensor TransformerModel::encoder_stack(Tensor x, const AttentionMask& self_mask, bool train,
                                       Rng* rng) const {
  for (int i = 0; i < cfg_.num_layers; ++i) {
    const std::string layer = "enc.layer" + std::to_string(i);
    const Tensor attended =
        multi_head_attention(x, x, x, cparam(layer + ".attn.Wq"), cparam(layer + ".attn.Wk"),
                             cparam(layer + ".attn.Wv"), cparam(layer + ".attn.Wo"), self_mask,
                             cfg_.num_heads);
    x = sublayer(x, attended, layer + ".norm1", train, rng);
    x = sublayer(x, feed_forward(x, layer + ".ffn"), layer + ".norm2", train, rng);
  }
  return x;
}

Tensor TransformerModel::decoder_stack(Tensor x, const AttentionMask& self_mask,
                                       const Tensor& memory, const AttentionMask& cross_mask,
                                       bool train, Rng* rng) const {
  for (int i = 0; i < cfg_.num_layers; ++i) {
    const std::string layer = "dec.layer" + std::to_string(i);
    const Tensor self_attended = multi_head_attention(
        x, x, x, cparam(layer + ".self_attn.Wq"), cparam(layer + ".self_attn.Wk"),
        cparam(layer + ".self_attn.Wv"), cparam(layer + ".self_attn.Wo"), self_mask,
        cfg_.num_heads);
    x = sublayer(x, self_attended, layer + ".norm1", train, rng);
    const Tensor cross_attended = multi_head_attention(
        x, memory, memory, cparam(layer + ".cross_attn.Wq"), cparam(layer + ".cross_attn.Wk"),
        cparam(layer + ".cross_attn.Wv"), cparam(layer + ".cross_attn.Wo"), cross_mask,
        cfg_.num_heads);
    x = sublayer(x, cross_attended, layer + ".norm2", train, rng);
    x = sublayer(x, feed_forward(x, layer + ".ffn"), layer + ".norm3", train, rng);
  }
  return x;
}

Tensor TransformerModel::encode(const std::vector<int>& src_ids, bool train, Rng* rng) const {
  const int T = static_cast<int>(src_ids.size());
  if (T == 0) throw std::invalid_argument("encode: empty source sequence");
  if (T > cfg_.max_len) {
    throw std::invalid_argument("encode: length " + std::to_string(T) + " exceeds max_len " +
                                std::to_string(cfg_.max_len));
  }
  const Tensor raw = gather_rows(cparam("src_embed"), src_ids);
  const Tensor x = embed_positions(raw, train, rng);
  return encoder_stack(x, AttentionMask::padding(T, pad_mask_of(src_ids)), train, rng);
}

Tensor TransformerModel::encode_soft(const Tensor& dists, bool train, Rng* rng) const {
  const int T = dists.rows();
  if (T > cfg_.max_len) {
    throw std::invalid_argument("encode_soft: length " + std::to_string(T) + " exceeds max_len " +
                                std::to_string(cfg_.max_len));
  }
  const Tensor raw = soft_embed(dists, cparam("src_embed"));
  const Tensor x = embed_positions(raw, train, rng);
  return encoder_stack(x, AttentionMask::none(T, T), train, rng);
}

Tensor TransformerModel::decode_teacher_forced(const std::vector<int>& tgt_in,
                                               const Tensor& memory,
                                               const std::vector<bool>& memory_key_pad, bool train,
                                               Rng* rng) const {
  const int T = static_cast<int>(tgt_in.size());
  if (T == 0) throw std::invalid_argument("decode_teacher_forced: empty target prefix");
  if (T > cfg_.max_len) {
    throw std::invalid_argument("decode_teacher_forced: length " + std::to_string(T) +
                                " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  if (memory.cols() != cfg_.d_model) {
    throw std::invalid_argument("decode_teacher_forced: memory width " +
                                std::to_string(memory.cols()) + " does not match d_model " +
                                std::to_string(cfg_.d_model));
  }
  if (static_cast<int>(memory_key_pad.size()) != memory.rows()) {
    throw std::invalid_argument("decode_teacher_forced: memory pad mask length mismatch");
  }
  const Tensor raw = gather_rows(cparam("tgt_embed"), tgt_in);
  const Tensor x = embed_positions(raw, train, rng);
  const Tensor h = decoder_stack(x, AttentionMask::combined(pad_mask_of(tgt_in)), memory,
                                 AttentionMask::padding(T, memory_key_pad), train, rng);
  return matmul(h, cparam("out_proj"));
}

Tensor TransformerModel::decode_from_embedded(const Tensor& tgt_embed, const Tensor& memory,
                                              const std::vector<bool>& memory_key_pad, bool train,
                                              Rng* rng) const {
  const int T = tgt_embed.rows();
  if (T > cfg_.max_len) {
    throw std::invalid_argument("decode_from_embedded: length " + std::to_string(T) +
                                " exceeds max_len " + std::to_string(cfg_.max_len));
  }
  if (tgt_embed.cols() != cfg_.d_model || memory.cols() != cfg_.d_model) {
    throw std::invalid_argument("decode_from_embedded: width mismatch with d_model " +
                                std::to_string(cfg_.d_model));
  }
  if (static_cast<int>(memory_key_pad.size()) != memory.rows()) {
    throw std::invalid_argument("decode_from_embedded: memory pad mask length mismatch");
  }
  const Tensor x = embed_positions(tgt_embed, train, rng);
  const Tensor h = decoder_stack(x, AttentionMask::causal(T), memory,
                                 AttentionMask::padding(T, memory_key_pad), train, rng);
  return matmul(h, cparam("out_proj"));
}

Tensor TransformerModel::forward_nll(const std::vector<int>& src_ids,
                                     const std::vector<int>& tgt_ids, bool train, Rng* rng) const {
  if (tgt_ids.size() < 2) {
    throw std::invalid_argument("forward_nll: target must hold at least bos plus one token");
  }
  const Tensor memory = encode(src_ids, train, rng);
  const std::vector<int> decoder_in(tgt_ids.begin(), tgt_ids.end() - 1);
  const std::vector<int> targets(tgt_ids.begin() + 1, tgt_ids.end());
  const Tensor logits =
      decode_teacher_forced(decoder_in, memory, pad_mask_of(src_ids), train, rng);
  return cross_entropy(logits, targets, kPadId);
}

}  // namespace nl2code
