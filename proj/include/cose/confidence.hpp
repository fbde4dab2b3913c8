#pragma once

/**
 * Token- and sequence-level confidence signals.
 *
 * A feedback role (Validator or Judge) emits a sequence of next-token
 * probability distributions while producing its verdict. Each distribution
 * is mapped to a per-token confidence in [0, 1] and the trace is aggregated
 * into one sequence-level score. The default signal is normalized entropy:
 *
 *   c_t = 1 - H(P_t) / log|V|,   c_seq = mean_t c_t
 *
 * with H in nats (the normalization makes the log base cancel). All signal
 * kinds are anchored so a uniform distribution scores 0 and a one-hot
 * distribution scores 1.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "cose/errors.hpp"

namespace cose {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One next-token probability vector over a finite vocabulary, |V| >= 2.
struct TokenDistribution {
  std::vector<double> probs;

  size_t vocab_size() const { return probs.size(); }
};

inline constexpr double kDistributionSumTolerance = 1e-9;

// Throws InvalidInputError unless probs is a probability vector over >= 2
// outcomes (entries in [0,1], sum within 1e-9 of 1).
inline void validate_distribution(const TokenDistribution& dist) {
  if (dist.probs.size() < 2) {
    throw InvalidInputError("TokenDistribution: vocabulary size must be >= 2, got " +
                            std::to_string(dist.probs.size()));
  }
  double sum = 0.0;
  for (double p : dist.probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInputError("TokenDistribution: entry " + std::to_string(p) +
                              " outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kDistributionSumTolerance) {
    throw InvalidInputError("TokenDistribution: entries sum to " + std::to_string(sum) +
                            ", expected 1 within 1e-9");
  }
}

enum class SignalKind {
  normalized_entropy,  // 1 - H/log|V|, mean over tokens (the default)
  self_certainty,      // rescaled top probability, geometric mean over tokens
  margin,              // top-two probability gap, mean over tokens
  max_prob,            // rescaled top probability, mean over tokens
  neg_entropy,         // 1 - H/log|V|, min over tokens
};

// Per-token confidences plus their aggregate for one emission.
struct ConfidenceTrace {
  std::vector<double> token_confidences;
  double sequence_confidence = 0.0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// entropy in nats with 0*log 0 := 0
inline double entropy_nats(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

namespace detail {

inline double normalized_entropy_confidence(const TokenDistribution& dist) {
  double h = entropy_nats(dist.probs);
  double c = 1.0 - h / std::log(static_cast<double>(dist.probs.size()));
  return std::clamp(c, 0.0, 1.0);
}

inline void top_two(const TokenDistribution& dist, double& p1, double& p2) {
  p1 = 0.0;
  p2 = 0.0;
  for (double p : dist.probs) {
    if (p > p1) {
      p2 = p1;
      p1 = p;
    } else if (p > p2) {
      p2 = p;
    }
  }
}

// top probability rescaled so uniform -> 0 and one-hot -> 1
inline double rescaled_max_prob(const TokenDistribution& dist) {
  double p1 = *std::max_element(dist.probs.begin(), dist.probs.end());
  double u = 1.0 / static_cast<double>(dist.probs.size());
  return std::clamp((p1 - u) / (1.0 - u), 0.0, 1.0);
}

}  // namespace detail

// Per-token confidence in [0, 1]; 0 for a uniform distribution and 1 for a
// one-hot distribution under every kind.
inline double token_confidence(const TokenDistribution& dist, SignalKind kind) {
  validate_distribution(dist);
  switch (kind) {
    case SignalKind::normalized_entropy:
    case SignalKind::neg_entropy:
      return detail::normalized_entropy_confidence(dist);
    case SignalKind::margin: {
      double p1 = 0.0, p2 = 0.0;
      detail::top_two(dist, p1, p2);
      return std::clamp(p1 - p2, 0.0, 1.0);
    }
    case SignalKind::max_prob:
    case SignalKind::self_certainty:
      return detail::rescaled_max_prob(dist);
  }
  throw InvalidInputError("token_confidence: unknown signal kind");
}

// Arithmetic mean of a non-empty trace of per-token confidences.
inline double sequence_confidence(const std::vector<double>& token_confidences) {
  if (token_confidences.empty()) {
    throw InvalidInputError("sequence_confidence: empty trace");
  }
  for (double c : token_confidences) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw InvalidInputError("sequence_confidence: token confidence " + std::to_string(c) +
                              " outside [0, 1]");
    }
  }
  double sum = std::accumulate(token_confidences.begin(), token_confidences.end(), 0.0);
  return sum / static_cast<double>(token_confidences.size());
}

namespace detail {

// Kind-specific aggregation. The default signal uses the arithmetic mean;
// neg_entropy keeps the weakest token and self_certainty compounds
// multiplicatively (geometric mean), which is what distinguishes those kinds
// at the sequence level.
inline double aggregate(const std::vector<double>& token_confidences, SignalKind kind) {
  switch (kind) {
    case SignalKind::neg_entropy:
      return *std::min_element(token_confidences.begin(), token_confidences.end());
    case SignalKind::self_certainty: {
      double log_sum = 0.0;
      for (double c : token_confidences) {
        if (c <= 0.0) return 0.0;
        log_sum += std::log(c);
      }
      return std::exp(log_sum / static_cast<double>(token_confidences.size()));
    }
    default:
      return sequence_confidence(token_confidences);
  }
}

}  // namespace detail

// Scores every position of an emission and aggregates. `begin`/`end` select
// the token span to score (defaults to the whole emission); the restriction
// exists for callers that only want the score-token span.
inline ConfidenceTrace confidence_of_emission(const std::vector<TokenDistribution>& dists,
                                              SignalKind kind, size_t begin = 0,
                                              size_t end = static_cast<size_t>(-1)) {
  if (dists.empty()) throw InvalidInputError("confidence_of_emission: empty emission");
  if (end == static_cast<size_t>(-1)) end = dists.size();
  if (begin >= end || end > dists.size()) {
    throw InvalidInputError("confidence_of_emission: invalid span [" + std::to_string(begin) +
                            ", " + std::to_string(end) + ") for emission of length " +
                            std::to_string(dists.size()));
  }
  ConfidenceTrace trace;
  trace.token_confidences.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) {
    try {
      trace.token_confidences.push_back(token_confidence(dists[i], kind));
    } catch (const InvalidInputError& e) {
      throw InvalidInputError("emission position " + std::to_string(i) + ": " + e.what());
    }
  }
  trace.sequence_confidence = detail::aggregate(trace.token_confidences, kind);
  return trace;
}

inline const char* signal_kind_name(SignalKind kind) {
  switch (kind) {
    case SignalKind::normalized_entropy: return "normalized_entropy";
    case SignalKind::self_certainty: return "self_certainty";
    case SignalKind::margin: return "margin";
    case SignalKind::max_prob: return "max_prob";
    case SignalKind::neg_entropy: return "neg_entropy";
  }
  return "unknown";
}

inline SignalKind signal_kind_from_name(const std::string& name) {
  if (name == "normalized_entropy") return SignalKind::normalized_entropy;
  if (name == "self_certainty") return SignalKind::self_certainty;
  if (name == "margin") return SignalKind::margin;
  if (name == "max_prob") return SignalKind::max_prob;
  if (name == "neg_entropy") return SignalKind::neg_entropy;
  throw InvalidInputError("unknown signal kind: " + name);
}

}  // namespace cose
