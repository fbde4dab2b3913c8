#pragma once

/**
 * Confidence-weighted clipped-surrogate policy gradient.
 *
 * For a batch of N samples with importance ratios rho_i, advantages A_i and
 * per-sample weights w_i in [0.1, 1.0]:
 *
 *   loss = -(1/N) * sum_i w_i * min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
 *          + beta * KL(pi_theta || pi_ref)
 *
 * The weight multiplies each sample's surrogate term (not the reward and
 * not the advantage), so the advantage baseline stays unweighted. The KL
 * term is computed exactly from the softmax distributions at the batch's
 * (context, bias) pairs rather than estimated from samples. Advantages use
 * a batch-mean baseline: A_i = r_i - mean(r).
 *
 * Accumulation is single-threaded in fixed sample order, so results are
 * bit-reproducible for a given batch.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cose/errors.hpp"
#include "cose/policy.hpp"

namespace cose {

struct RolloutSample {
  std::vector<TrajectoryStep> steps;  // non-empty token sequence
  double logp_behavior = 0.0;         // log-prob at rollout time
  double logp_reference = 0.0;        // log-prob under the reference policy
  double reward = 0.0;                // in [0, 1]
  double weight = 1.0;                // in [weight_floor, 1.0]
};

struct RolloutBatch {
  std::vector<RolloutSample> samples;
};

struct OptimizerConfig {
  double clip_ratio = 0.2;
  double learning_rate = 1e-6;  // base rate; cosine-decayed to 0 over total_steps
  double kl_coeff = 0.01;
  double weight_floor = 0.1;
  int total_steps = 200;
};

inline void validate_optimizer_config(const OptimizerConfig& config) {
  if (!(config.clip_ratio > 0.0)) throw InvalidInputError("OptimizerConfig: clip_ratio <= 0");
  if (!(config.learning_rate > 0.0)) {
    throw InvalidInputError("OptimizerConfig: learning_rate <= 0");
  }
  if (!(config.kl_coeff >= 0.0)) throw InvalidInputError("OptimizerConfig: kl_coeff < 0");
  if (!(config.weight_floor > 0.0 && config.weight_floor <= 1.0)) {
    throw InvalidInputError("OptimizerConfig: weight_floor outside (0, 1]");
  }
}

inline void validate_batch(const RolloutBatch& batch) {
  if (batch.samples.empty()) throw InvalidInputError("RolloutBatch: empty batch");
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    if (batch.samples[i].steps.empty()) {
      throw InvalidInputError("RolloutBatch: sample " + std::to_string(i) +
                              " has an empty trajectory");
    }
  }
}

// sequence log-prob under the given parameters
inline double log_prob(const PolicyParams& params, const RolloutSample& sample) {
  double lp = 0.0;
  for (const TrajectoryStep& step : sample.steps) {
    lp += action_log_probs(params, step.context, step.bias)[step.action];
  }
  return lp;
}

// A_i = r_i - mean(r); the batch mean serves as the baseline
inline std::vector<double> advantages(const RolloutBatch& batch) {
  validate_batch(batch);
  double mean = 0.0;
  for (const RolloutSample& s : batch.samples) mean += s.reward;
  mean /= static_cast<double>(batch.samples.size());
  std::vector<double> out(batch.samples.size());
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    out[i] = batch.samples[i].reward - mean;
  }
  return out;
}

// exact KL(pi_theta(.|context, bias) || pi_ref(.|context, bias))
inline double kl_divergence_at(const PolicyParams& params, const PolicyParams& ref_params,
                               int context, const std::vector<double>& bias = {}) {
  std::vector<double> lp = action_log_probs(params, context, bias);
  std::vector<double> lq = action_log_probs(ref_params, context, bias);
  double kl = 0.0;
  for (size_t a = 0; a < lp.size(); ++a) {
    kl += std::exp(lp[a]) * (lp[a] - lq[a]);
  }
  return std::max(kl, 0.0);
}

// mean KL over a list of contexts (no bias)
inline double kl_divergence(const PolicyParams& params, const PolicyParams& ref_params,
                            const std::vector<int>& contexts) {
  if (contexts.empty()) throw InvalidInputError("kl_divergence: no contexts given");
  double sum = 0.0;
  for (int c : contexts) sum += kl_divergence_at(params, ref_params, c);
  return sum / static_cast<double>(contexts.size());
}

struct SurrogateLoss {
  double loss = 0.0;         // policy_term + kl_coeff * kl_term
  double policy_term = 0.0;  // mean of per_sample
  double kl_term = 0.0;      // mean per-step KL against the reference
  // -w_i * min(rho_i A_i, clip(rho_i) A_i), reported for tracing
  std::vector<double> per_sample;
};

namespace detail {

// mean over all steps in the batch of KL(pi_theta || pi_ref) at the step's
// (context, bias)
inline double batch_kl(const PolicyParams& params, const PolicyParams& ref_params,
                       const RolloutBatch& batch) {
  double sum = 0.0;
  size_t steps = 0;
  for (const RolloutSample& s : batch.samples) {
    for (const TrajectoryStep& step : s.steps) {
      sum += kl_divergence_at(params, ref_params, step.context, step.bias);
      ++steps;
    }
  }
  return sum / static_cast<double>(steps);
}

}  // namespace detail

inline SurrogateLoss surrogate_loss(const PolicyParams& params, const PolicyParams& ref_params,
                                    const RolloutBatch& batch,
                                    const std::vector<double>& advantage,
                                    const OptimizerConfig& config) {
  validate_batch(batch);
  if (advantage.size() != batch.samples.size()) {
    throw InvalidInputError("surrogate_loss: advantage size mismatch");
  }
  SurrogateLoss result;
  result.per_sample.resize(batch.samples.size());
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const RolloutSample& s = batch.samples[i];
    double rho = std::exp(log_prob(params, s) - s.logp_behavior);
    if (!std::isfinite(rho)) {
      throw NumericalFaultError("surrogate_loss: non-finite ratio at sample " +
                                std::to_string(i));
    }
    double clipped = std::clamp(rho, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
    double surrogate = std::min(rho * advantage[i], clipped * advantage[i]);
    result.per_sample[i] = -s.weight * surrogate;
    result.policy_term += result.per_sample[i];
  }
  result.policy_term /= static_cast<double>(batch.samples.size());
  if (config.kl_coeff != 0.0) {
    result.kl_term = detail::batch_kl(params, ref_params, batch);
  }
  result.loss = result.policy_term + config.kl_coeff * result.kl_term;
  return result;
}

// Analytic gradient of surrogate_loss with respect to the policy logits,
// same row-major shape as params.logits. Verified against central finite
// differences in the test suite.
inline std::vector<double> surrogate_gradient(const PolicyParams& params,
                                              const PolicyParams& ref_params,
                                              const RolloutBatch& batch,
                                              const std::vector<double>& advantage,
                                              const OptimizerConfig& config) {
  validate_batch(batch);
  if (advantage.size() != batch.samples.size()) {
    throw InvalidInputError("surrogate_gradient: advantage size mismatch");
  }
  const double n = static_cast<double>(batch.samples.size());
  std::vector<double> grad(params.logits.size(), 0.0);

  size_t total_steps_in_batch = 0;
  for (const RolloutSample& s : batch.samples) total_steps_in_batch += s.steps.size();

  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const RolloutSample& s = batch.samples[i];
    double rho = std::exp(log_prob(params, s) - s.logp_behavior);
    if (!std::isfinite(rho)) {
      throw NumericalFaultError("surrogate_gradient: non-finite ratio at sample " +
                                std::to_string(i));
    }
    double clipped = std::clamp(rho, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio);
    // gradient flows only when the unclipped term is the active minimum
    bool unclipped_active = rho * advantage[i] <= clipped * advantage[i];
    if (unclipped_active) {
      // d/dtheta [-w rho A / N] = -(w A rho / N) * d log pi / dtheta
      double coef = -s.weight * advantage[i] * rho / n;
      for (const TrajectoryStep& step : s.steps) {
        std::vector<double> p = action_probs(params, step.context, step.bias);
        size_t row = static_cast<size_t>(step.context) * params.actions;
        for (int a = 0; a < params.actions; ++a) {
          double dlogp = (a == step.action ? 1.0 : 0.0) - p[a];
          grad[row + a] += coef * dlogp;
        }
      }
    }
    if (config.kl_coeff != 0.0) {
      // d KL / d z_k = p_k (log p_k - log q_k - KL)
      for (const TrajectoryStep& step : s.steps) {
        std::vector<double> lp = action_log_probs(params, step.context, step.bias);
        std::vector<double> lq = action_log_probs(ref_params, step.context, step.bias);
        double kl = 0.0;
        for (int a = 0; a < params.actions; ++a) kl += std::exp(lp[a]) * (lp[a] - lq[a]);
        size_t row = static_cast<size_t>(step.context) * params.actions;
        double coef = config.kl_coeff / static_cast<double>(total_steps_in_batch);
        for (int a = 0; a < params.actions; ++a) {
          grad[row + a] += coef * std::exp(lp[a]) * (lp[a] - lq[a] - kl);
        }
      }
    }
  }
  return grad;
}

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), reaching 0 at the
// final step
inline double cosine_lr(const OptimizerConfig& config, int step_index) {
  if (step_index < 0 || step_index > config.total_steps) {
    throw InvalidInputError("cosine_lr: step index " + std::to_string(step_index) +
                            " outside [0, " + std::to_string(config.total_steps) + "]");
  }
  if (config.total_steps == 0) return config.learning_rate;
  double frac = static_cast<double>(step_index) / static_cast<double>(config.total_steps);
  return config.learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

// One gradient-descent step on the surrogate loss. Aborts (throws
// NumericalFaultError) on a non-finite gradient, leaving params untouched.
inline PolicyParams step(const PolicyParams& params, const PolicyParams& ref_params,
                         const RolloutBatch& batch, const OptimizerConfig& config,
                         int step_index) {
  std::vector<double> adv = advantages(batch);
  std::vector<double> grad = surrogate_gradient(params, ref_params, batch, adv, config);
  for (size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalFaultError("step: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  double lr = cosine_lr(config, step_index);
  PolicyParams next = params;
  for (size_t i = 0; i < grad.size(); ++i) next.logits[i] -= lr * grad[i];
  return next;
}

}  // namespace cose
