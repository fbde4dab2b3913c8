#pragma once

/**
 * Credit assignment: per-sample update weights and role rewards.
 *
 *   w_P(q)    = clip(v(q) * c_V(q),            0.1, 1.0)
 *   w_S(q,a)  = clip(v(q) * c_V(q) * c_J(q,a), 0.1, 1.0)
 *   r_S(q,a)  = f_S * p(q,a)
 *   r_P(q)    = f_P * (v(q) + 4 p(q)(1 - p(q))) / 2
 *
 * The floor keeps uncertain samples in the update at reduced influence
 * instead of discarding them.
 */

#include <algorithm>
#include <string>

#include "cose/errors.hpp"
#include "cose/feedback.hpp"

namespace cose {

inline constexpr double kWeightFloor = 0.1;

struct UpdateWeight {
  double value = 1.0;  // in [0.1, 1.0]
  Role role = Role::Proposer;
};

struct RewardRecord {
  double value = 0.0;  // in [0, 1]
  Role role = Role::Proposer;
  bool format_ok = true;
};

namespace detail {

inline void require_unit_interval(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw InvalidInputError(std::string(name) + " = " + std::to_string(x) +
                            " outside [0, 1]");
  }
}

}  // namespace detail

// 4 p (1 - p), the intermediate-difficulty preference; peaks at p = 0.5.
inline double learnability(double p) {
  detail::require_unit_interval(p, "solve rate");
  return 4.0 * p * (1.0 - p);
}

inline UpdateWeight proposer_weight(double v, double c_v, double floor = kWeightFloor) {
  detail::require_unit_interval(v, "v");
  detail::require_unit_interval(c_v, "c_v");
  return {std::clamp(v * c_v, floor, 1.0), Role::Proposer};
}

inline UpdateWeight solver_weight(double v, double c_v, double c_j,
                                  double floor = kWeightFloor) {
  detail::require_unit_interval(v, "v");
  detail::require_unit_interval(c_v, "c_v");
  detail::require_unit_interval(c_j, "c_j");
  return {std::clamp(v * c_v * c_j, floor, 1.0), Role::Solver};
}

inline RewardRecord solver_reward(bool format_ok, double p_qa) {
  detail::require_unit_interval(p_qa, "p_qa");
  return {format_ok ? p_qa : 0.0, Role::Solver, format_ok};
}

inline RewardRecord proposer_reward(bool format_ok, double v, double p_q) {
  detail::require_unit_interval(v, "v");
  double r = format_ok ? (v + learnability(p_q)) / 2.0 : 0.0;
  return {r, Role::Proposer, format_ok};
}

}  // namespace cose
