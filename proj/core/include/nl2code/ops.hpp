#pragma once

#include <vector>

#include "nl2code/rng.hpp"
#include "nl2code/tensor.hpp"

namespace nl2code {

// All ops are differentiable unless noted: they record a graph node when
// recording is on and an input requires grad.

/// Standard matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise sum. Accepts equal shapes, or a 1-d right operand matching the
/// last axis of the left one (broadcast over rows).
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise product, equal shapes only.
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// Row-wise softmax over the last axis, computed with max subtraction.
Tensor softmax(const Tensor& a);

/// Mean over non-pad positions of -log softmax(logits)[target].
/// logits is [T x V]; targets has length T. Pad positions contribute zero.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int pad_id);

/// Cross-entropy against rows that are already probability distributions:
/// mean over non-pad positions of -log probs[j][target_j].
Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& targets, int pad_id);

/// Per-position normalization over the last axis followed by the affine
/// gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor transpose(const Tensor& a);

/// Embedding lookup: selects rows of `table` by id. Gradients scatter-add
/// back into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

Tensor slice_rows(const Tensor& a, int first, int count);
Tensor slice_cols(const Tensor& a, int first, int count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

/// Inverted dropout: at train time zeroes entries with probability p and
/// scales survivors by 1/(1-p); identity when train is false or p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng, bool train);

}  // namespace nl2code
