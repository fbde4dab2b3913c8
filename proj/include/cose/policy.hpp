#pragma once

/**
 * Toy tabular softmax policy. A parameter matrix of shape
 * [contexts x actions] defines one categorical distribution per context via
 * softmax over the action axis. Steps may add a fixed bias vector to the
 * logits before the softmax (used to shift the Solver's success odds by
 * question difficulty).
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cose/errors.hpp"
#include "cose/rng.hpp"

namespace cose {

struct PolicyParams {
  int contexts = 0;
  int actions = 0;
  std::vector<double> logits;  // row-major [contexts x actions]

  PolicyParams() = default;
  PolicyParams(int contexts_, int actions_, double init = 0.0)
      : contexts(contexts_), actions(actions_),
        logits(static_cast<size_t>(contexts_) * static_cast<size_t>(actions_), init) {
    if (contexts_ < 1 || actions_ < 2) {
      throw InvalidInputError("PolicyParams: need >= 1 context and >= 2 actions");
    }
  }

  double& at(int context, int action) {
    return logits[static_cast<size_t>(context) * actions + action];
  }
  double at(int context, int action) const {
    return logits[static_cast<size_t>(context) * actions + action];
  }

  bool finite() const {
    for (double z : logits) {
      if (!std::isfinite(z)) return false;
    }
    return true;
  }
};

// log softmax(logits[context] + bias); empty bias means zero bias
inline std::vector<double> action_log_probs(const PolicyParams& params, int context,
                                            const std::vector<double>& bias = {}) {
  if (context < 0 || context >= params.contexts) {
    throw InvalidInputError("action_log_probs: context " + std::to_string(context) +
                            " outside [0, " + std::to_string(params.contexts) + ")");
  }
  if (!bias.empty() && bias.size() != static_cast<size_t>(params.actions)) {
    throw InvalidInputError("action_log_probs: bias length mismatch");
  }
  std::vector<double> z(params.actions);
  double z_max = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < params.actions; ++a) {
    z[a] = params.at(context, a) + (bias.empty() ? 0.0 : bias[a]);
    if (z[a] > z_max) z_max = z[a];
  }
  double sum = 0.0;
  for (int a = 0; a < params.actions; ++a) sum += std::exp(z[a] - z_max);
  double log_z = z_max + std::log(sum);
  for (int a = 0; a < params.actions; ++a) z[a] -= log_z;
  return z;
}

inline std::vector<double> action_probs(const PolicyParams& params, int context,
                                        const std::vector<double>& bias = {}) {
  std::vector<double> lp = action_log_probs(params, context, bias);
  for (double& x : lp) x = std::exp(x);
  return lp;
}

inline int sample_action(const PolicyParams& params, int context, Rng& rng,
                         const std::vector<double>& bias = {}) {
  return static_cast<int>(rng.next_weighted(action_probs(params, context, bias)));
}

// One step of a trajectory: the context the policy was queried in, the
// action it took, and the fixed logit bias applied at that step.
struct TrajectoryStep {
  int context = 0;
  int action = 0;
  std::vector<double> bias;  // empty = no bias
};

}  // namespace cose
