#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nl2code/tensor.hpp"

namespace nl2code {

// Per-parameter Adam accumulators, keyed by parameter name so checkpoints can
// save and restore them without relying on iteration order.
struct AdamState {
  long long step = 0;  // number of optimizer steps taken so far
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, std::vector<double>> m;  // first-moment estimates
  std::map<std::string, std::vector<double>> v;  // second-moment estimates
};

// Global-norm gradient clipping. Returns the pre-clip norm; rescales every
// gradient in place when the norm exceeds max_norm. max_norm <= 0 disables
// clipping (the norm is still returned for logging).
double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

// One bias-corrected Adam update over every parameter that has a gradient.
// Gradients are released afterwards so the next forward pass starts clean.
// Throws on lr <= 0.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr);

// Learning-rate schedule. "noam" follows the inverse-square-root warmup curve
// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), scaled by base_scale;
// "constant" returns base_lr at every step. Throws on step < 1.
struct LrSchedule {
  std::string kind = "noam";  // "noam" | "constant"
  int d_model = 128;
  int warmup_steps = 400;
  double base_scale = 1.0;  // multiplier applied on top of the noam curve
  double base_lr = 0.001;   // used when kind == "constant"

  double at(long long step) const;
};

}  // namespace nl2code
