#pragma once

/**
 * Feedback channel: turns a role's raw verdict (discrete score + emission)
 * into a normalized score with an attached confidence, and checks the
 * format validity of role outputs.
 */

#include <cstddef>
#include <string>
#include <vector>

#include "cose/confidence.hpp"
#include "cose/errors.hpp"

namespace cose {

enum class Role { Proposer, Validator, Solver, Judge };

inline const char* role_name(Role role) {
  switch (role) {
    case Role::Proposer: return "proposer";
    case Role::Validator: return "validator";
    case Role::Solver: return "solver";
    case Role::Judge: return "judge";
  }
  return "unknown";
}

// Discrete score scale [min, max], e.g. the 1..10 rubric.
struct ScoreScale {
  int min = 1;
  int max = 10;
};

// A role's raw output: the integer score it emitted, the per-token
// distributions produced while emitting, and whether the output was
// well-formed. score_span marks which emission positions carry the score
// itself (the rest are reasoning tokens).
struct RawVerdict {
  int score_token = 0;
  std::vector<TokenDistribution> emission;
  bool format_ok = true;
  size_t score_span_begin = 0;
  size_t score_span_end = 0;  // exclusive; 0,0 means "whole emission"
};

struct FeedbackResult {
  double normalized_score = 0.0;  // in [0, 1]; forced to 0 when !format_ok
  double confidence = 0.0;        // in [0, 1]
  bool format_ok = true;
  Role role = Role::Validator;
};

struct AssessOptions {
  SignalKind kind = SignalKind::normalized_entropy;
  // When set, confidence is computed over the verdict's score span only
  // instead of the whole emission. Off by default: the sequence confidence
  // is meant to reflect the whole feedback generation.
  bool score_span_only = false;
};

// (raw - min) / (max - min); endpoints map to exactly 0 and 1.
inline double normalize_score(int raw, const ScoreScale& scale) {
  if (scale.min >= scale.max) {
    throw InvalidInputError("normalize_score: scale [" + std::to_string(scale.min) + ", " +
                            std::to_string(scale.max) + "] is degenerate");
  }
  if (raw < scale.min || raw > scale.max) {
    throw OutOfRangeError("normalize_score: raw score " + std::to_string(raw) +
                          " outside scale [" + std::to_string(scale.min) + ", " +
                          std::to_string(scale.max) + "]");
  }
  return static_cast<double>(raw - scale.min) / static_cast<double>(scale.max - scale.min);
}

// Normalized score plus sequence confidence over the emission. A malformed
// verdict zeroes the score but still reports confidence.
inline FeedbackResult assess(const RawVerdict& raw, const ScoreScale& scale, Role role,
                             const AssessOptions& options = {}) {
  if (raw.emission.empty()) throw InvalidInputError("assess: verdict has empty emission");

  size_t begin = 0;
  size_t end = raw.emission.size();
  if (options.score_span_only && raw.score_span_end > raw.score_span_begin) {
    begin = raw.score_span_begin;
    end = raw.score_span_end;
  }
  ConfidenceTrace trace = confidence_of_emission(raw.emission, options.kind, begin, end);

  FeedbackResult result;
  result.role = role;
  result.format_ok = raw.format_ok;
  result.confidence = trace.sequence_confidence;
  result.normalized_score = raw.format_ok ? normalize_score(raw.score_token, scale) : 0.0;
  return result;
}

struct TagPair {
  std::string open;
  std::string close;
};

// True iff both tags occur exactly once and the open tag precedes the close
// tag. Text outside the tags is allowed.
inline bool format_check(const std::vector<std::string>& text_tokens, const TagPair& tags) {
  long open_count = 0;
  long close_count = 0;
  long first_open = -1;
  long first_close = -1;
  for (size_t i = 0; i < text_tokens.size(); ++i) {
    if (text_tokens[i] == tags.open) {
      ++open_count;
      if (first_open < 0) first_open = static_cast<long>(i);
    } else if (text_tokens[i] == tags.close) {
      ++close_count;
      if (first_close < 0) first_close = static_cast<long>(i);
    }
  }
  return open_count == 1 && close_count == 1 && first_open < first_close;
}

}  // namespace cose
