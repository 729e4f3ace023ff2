#include "nl2code/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace nl2code {

double clip_global_norm(std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double shrink = max_norm / norm;
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.grad()) g *= shrink;
    }
  }
  return norm;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state, double lr) {
  if (lr <= 0.0) {
    throw std::invalid_argument("adam_step: lr must be positive, got " + std::to_string(lr));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    auto& g = p.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size() || v.size() != g.size()) {
      throw std::runtime_error("adam_step: stored moments for \"" + name +
                               "\" do not match the parameter size");
    }
    auto& w = p.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.clear_grad();
  }
}

double LrSchedule::at(long long step) const {
  if (step < 1) {
    throw std::invalid_argument("LrSchedule: step must be >= 1, got " + std::to_string(step));
  }
  if (kind == "constant") return base_lr;
  if (kind != "noam") {
    throw std::runtime_error("LrSchedule: unknown kind \"" + kind + "\"");
  }
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return base_scale * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

}  // namespace nl2code
