#pragma once

/**
 * Synthetic world: a seedable environment with ground-truth question
 * validity and answer correctness, plus Validator/Judge roles whose
 * emission entropy is tied to their error rate.
 *
 * Questions are (skill, difficulty) pairs on a bucket grid. The Proposer
 * picks a (skill, bucket) action from its softmax; harder questions are
 * latently invalid more often. The Solver succeeds with probability
 * sigmoid(theta_skill - logit(d)), so its per-skill competence is
 * learnable.
 *
 * Verdicts use a noisy two-band score channel with effective error rate
 * eps(d) = min(eps + lambda * d, 0.5). Role errors are persistent per
 * question: with probability eps(d) the role draws an inverted key for the
 * question and then grades it consistently wrong (for answers to latently
 * invalid questions the judge key is a fair coin, since there is no ground
 * truth to key on). The emission places most mass on the band matching the
 * role's key (top band for valid/correct under a clean key) and the rest
 * on the opposite band, uniform within each band; the emitted score is
 * sampled from that distribution. Marginally over fresh questions the
 * band-error rate is exactly eps(d).
 *
 * Confidence texture: the emission starts with `think_tokens` reasoning
 * positions, followed by the score position. A reasoning position mixes a
 * spike on the key band's center score with a uniform component over the
 * whole vocabulary, so its confidence spans the full [0, 1] range: sharp
 * under a confident clean key, fully diffuse when the role is torn. Under
 * an inverted key the reasoning positions are maximally torn (the role
 * commits to a wrong score while its reasoning is visibly uncertain); under
 * a clean key their residual grows with the channel noise. The
 * score-position residuals are 0.5 * (2 eps)^2 when inverted and
 * eps/(1-eps) times that when clean, which makes the marginal band error
 * exactly eps. Residuals are jittered per verdict by Beta draws whose means
 * keep that calibration exact; `channel_concentration` sets how bimodal the
 * jitter is. Emission entropy rises with every residual, so noisier
 * verdicts score lower sequence confidence.
 */

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cose/errors.hpp"
#include "cose/feedback.hpp"
#include "cose/policy.hpp"
#include "cose/rng.hpp"

namespace cose {

struct WorldConfig {
  int skill_dim = 8;
  int difficulty_buckets = 5;        // bucket k maps to d = k / (buckets - 1)
  double validator_noise = 0.1;      // eps_V in [0, 0.5]
  double judge_noise = 0.1;          // eps_J in [0, 0.5]
  double noise_difficulty_slope = 0.0;  // lambda >= 0
  double invalidity_slope = 0.3;     // P(invalid) = d * invalidity_slope
  ScoreScale score_scale{1, 10};
  int think_tokens = 2;              // reasoning positions per verdict emission
  double channel_concentration = 2.0;  // Beta concentration; 0 = deterministic mass
  double solver_format_ok_prob = 0.98;
  uint64_t seed = 0;
};

inline void validate_world_config(const WorldConfig& config) {
  if (config.skill_dim < 1) throw InvalidInputError("WorldConfig: skill_dim must be >= 1");
  if (config.difficulty_buckets < 2) {
    throw InvalidInputError("WorldConfig: difficulty_buckets must be >= 2");
  }
  if (!(config.validator_noise >= 0.0 && config.validator_noise <= 0.5)) {
    throw InvalidInputError("WorldConfig: validator_noise outside [0, 0.5]");
  }
  if (!(config.judge_noise >= 0.0 && config.judge_noise <= 0.5)) {
    throw InvalidInputError("WorldConfig: judge_noise outside [0, 0.5]");
  }
  if (!(config.noise_difficulty_slope >= 0.0)) {
    throw InvalidInputError("WorldConfig: noise_difficulty_slope must be >= 0");
  }
  if (!(config.invalidity_slope >= 0.0 && config.invalidity_slope <= 1.0)) {
    throw InvalidInputError("WorldConfig: invalidity_slope outside [0, 1]");
  }
  if (config.score_scale.min >= config.score_scale.max) {
    throw InvalidInputError("WorldConfig: degenerate score scale");
  }
  if (config.think_tokens < 0) throw InvalidInputError("WorldConfig: think_tokens < 0");
  if (!(config.channel_concentration >= 0.0)) {
    throw InvalidInputError("WorldConfig: channel_concentration < 0");
  }
  if (!(config.solver_format_ok_prob >= 0.0 && config.solver_format_ok_prob <= 1.0)) {
    throw InvalidInputError("WorldConfig: solver_format_ok_prob outside [0, 1]");
  }
}

struct SyntheticQuestion {
  uint64_t id = 0;
  int skill_index = 0;
  double difficulty = 0.0;  // in [0, 1]
  bool valid = true;        // latent ground truth
};

struct SyntheticAnswer {
  uint64_t question_id = 0;
  bool correct = false;   // latent ground truth
  bool format_ok = true;  // latent intention; format_check sees text_tokens
  std::vector<std::string> text_tokens;
};

inline const TagPair kAnswerTags{"<answer>", "</answer>"};
inline const TagPair kQuestionTags{"<question>", "</question>"};

// eps(d) = min(eps + lambda * d, 0.5)
inline double effective_error(double base, double slope, double difficulty) {
  return std::min(base + slope * difficulty, 0.5);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Solver competence for one skill: the log-odds the two-action softmax row
// assigns to success.
inline double solver_skill_logit(const PolicyParams& solver, int skill_index) {
  return solver.at(skill_index, 1) - solver.at(skill_index, 0);
}

inline double solve_success_probability(const PolicyParams& solver,
                                        const SyntheticQuestion& q) {
  // difficulty clamped away from {0,1} so the log-odds stay finite
  double d = std::clamp(q.difficulty, 1e-3, 1.0 - 1e-3);
  return sigmoid(solver_skill_logit(solver, q.skill_index) - logit(d));
}

class SyntheticWorld {
 public:
  explicit SyntheticWorld(WorldConfig config) : config_(config) {
    validate_world_config(config);
    vocab_ = config_.score_scale.max - config_.score_scale.min + 1;
    band_width_ = std::max(1, (vocab_ * 3) / 10);  // [1,3] / [8,10] bands on the 1..10 scale
    if (2 * band_width_ > vocab_) band_width_ = vocab_ / 2;
    if (band_width_ < 1) throw InvalidInputError("SyntheticWorld: score scale too small");
  }

  const WorldConfig& config() const { return config_; }

  // The Proposer picks a question in two softmax steps: a skill from the
  // shared context row, then a difficulty bucket from that skill's row.
  // Rows share one rectangular parameter table; rows with fewer live
  // actions are masked with a large negative bias.
  int proposer_contexts() const { return 1 + config_.skill_dim; }
  int proposer_actions() const { return std::max(config_.skill_dim, config_.difficulty_buckets); }
  static constexpr int kSkillContext = 0;
  int bucket_context(int skill_index) const { return 1 + skill_index; }

  PolicyParams make_proposer_params() const {
    return PolicyParams(proposer_contexts(), proposer_actions());
  }

  std::vector<double> proposer_mask(int live_actions) const {
    std::vector<double> bias(static_cast<size_t>(proposer_actions()), 0.0);
    for (size_t a = static_cast<size_t>(live_actions); a < bias.size(); ++a) bias[a] = -1e30;
    return bias;
  }

  double bucket_difficulty(int bucket) const {
    return static_cast<double>(bucket) / static_cast<double>(config_.difficulty_buckets - 1);
  }

  // Proposer picks (skill, bucket); validity is latent with
  // P(valid) = 1 - d * invalidity_slope.
  SyntheticQuestion propose(const PolicyParams& proposer, Rng& rng) {
    int skill = sample_action(proposer, kSkillContext, rng, proposer_mask(config_.skill_dim));
    int bucket = sample_action(proposer, bucket_context(skill), rng,
                               proposer_mask(config_.difficulty_buckets));
    SyntheticQuestion q;
    q.id = next_question_id_++;
    q.skill_index = skill;
    q.difficulty = bucket_difficulty(bucket);
    q.valid = !rng.next_bernoulli(q.difficulty * config_.invalidity_slope);
    return q;
  }

  // the two-step trajectory that generated a question
  std::vector<TrajectoryStep> proposer_steps(const SyntheticQuestion& q) const {
    int bucket = static_cast<int>(
        std::llround(q.difficulty * (config_.difficulty_buckets - 1)));
    return {{kSkillContext, q.skill_index, proposer_mask(config_.skill_dim)},
            {bucket_context(q.skill_index), bucket, proposer_mask(config_.difficulty_buckets)}};
  }

  RawVerdict validate(const SyntheticQuestion& q, Rng& rng) const {
    double eps = effective_error(config_.validator_noise, config_.noise_difficulty_slope,
                                 q.difficulty);
    return emit_verdict(q.valid, eps, role_key_inverted(q.id, eps, kValidatorKeyTag), rng);
  }

  // true when the role mis-keyed this question and will grade it
  // consistently wrong
  bool validator_key_inverted(const SyntheticQuestion& q) const {
    double eps = effective_error(config_.validator_noise, config_.noise_difficulty_slope,
                                 q.difficulty);
    return role_key_inverted(q.id, eps, kValidatorKeyTag);
  }

  bool judge_key_inverted(const SyntheticQuestion& q) const {
    return role_key_inverted(q.id, judge_error(q), kJudgeKeyTag);
  }

  SyntheticAnswer solve(const PolicyParams& solver, const SyntheticQuestion& q, Rng& rng) const {
    double d = std::clamp(q.difficulty, 1e-3, 1.0 - 1e-3);
    std::vector<double> bias = {0.0, -logit(d)};
    int action = sample_action(solver, q.skill_index, rng, bias);
    SyntheticAnswer a;
    a.question_id = q.id;
    a.correct = action == 1;
    a.format_ok = rng.next_bernoulli(config_.solver_format_ok_prob);
    if (a.format_ok) {
      a.text_tokens = {kAnswerTags.open, "x", kAnswerTags.close};
    } else {
      switch (rng.next_below(3)) {
        case 0: a.text_tokens = {kAnswerTags.open, "x", "x"}; break;           // missing close
        case 1: a.text_tokens = {kAnswerTags.close, "x", kAnswerTags.open}; break;  // reversed
        default: a.text_tokens = {kAnswerTags.open, kAnswerTags.open, kAnswerTags.close}; break;
      }
    }
    return a;
  }

  RawVerdict judge(const SyntheticAnswer& a, const SyntheticQuestion& q, Rng& rng) const {
    double eps = judge_error(q);
    return emit_verdict(a.correct, eps, role_key_inverted(q.id, eps, kJudgeKeyTag), rng);
  }

  // Exact expected success probability over a frozen probe set; no sampling.
  double ground_truth_accuracy(const PolicyParams& solver,
                               const std::vector<SyntheticQuestion>& probe_set) const {
    if (probe_set.empty()) throw InvalidInputError("ground_truth_accuracy: empty probe set");
    double sum = 0.0;
    for (const SyntheticQuestion& q : probe_set) {
      sum += solve_success_probability(solver, q);
    }
    return sum / static_cast<double>(probe_set.size());
  }

  // Frozen evaluation questions covering the (skill, interior bucket) grid
  // evenly. The endpoint rungs are excluded: at d = 0 every policy succeeds
  // and at d = 1 none does, so those cells are insensitive to competence
  // and only compress the metric's dynamic range. Probe ids live in their
  // own range and never enter training.
  std::vector<SyntheticQuestion> make_probe_set(size_t n) const {
    int interior = std::max(1, config_.difficulty_buckets - 2);
    int first = config_.difficulty_buckets > 2 ? 1 : 0;
    std::vector<SyntheticQuestion> probe;
    probe.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      SyntheticQuestion q;
      q.id = (1ull << 62) + i;
      q.skill_index = static_cast<int>(i % config_.skill_dim);
      q.difficulty = bucket_difficulty(
          first + static_cast<int>((i / config_.skill_dim) % interior));
      q.valid = true;
      probe.push_back(q);
    }
    return probe;
  }

  bool score_in_matching_band(int score, bool latent_flag) const {
    int idx = score - config_.score_scale.min;
    return latent_flag ? idx >= vocab_ - band_width_ : idx < band_width_;
  }

  // --- payload codec ------------------------------------------------------
  // Questions are stored in the replay buffer as an opaque payload string.

  static std::string question_payload(const SyntheticQuestion& q) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), q.difficulty);
    return "s=" + std::to_string(q.skill_index) + " d=" + std::string(buf, res.ptr) +
           " valid=" + (q.valid ? "1" : "0");
  }

  static SyntheticQuestion question_from_payload(uint64_t id, const std::string& payload) {
    SyntheticQuestion q;
    q.id = id;
    int fields = 0;
    size_t pos = 0;
    while (pos < payload.size()) {
      size_t eq = payload.find('=', pos);
      if (eq == std::string::npos) break;
      std::string key = payload.substr(pos, eq - pos);
      size_t end = payload.find(' ', eq + 1);
      if (end == std::string::npos) end = payload.size();
      std::string value = payload.substr(eq + 1, end - eq - 1);
      if (key == "s") {
        q.skill_index = std::stoi(value);
        ++fields;
      } else if (key == "d") {
        double d = 0.0;
        auto res = std::from_chars(value.data(), value.data() + value.size(), d);
        if (res.ec != std::errc{}) throw InvalidInputError("bad payload difficulty: " + value);
        q.difficulty = d;
        ++fields;
      } else if (key == "valid") {
        q.valid = value == "1";
        ++fields;
      }
      pos = end + (end < payload.size() ? 1 : 0);
    }
    if (fields != 3) throw InvalidInputError("bad question payload: " + payload);
    return q;
  }

  static void export_probe_set(const std::vector<SyntheticQuestion>& probe, std::ostream& out) {
    for (const SyntheticQuestion& q : probe) {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), q.difficulty);
      out << q.id << '\t' << q.skill_index << '\t' << std::string(buf, res.ptr) << '\n';
    }
  }

 private:
  static constexpr uint64_t kValidatorKeyTag = 0x56414cull;
  static constexpr uint64_t kJudgeKeyTag = 0x4a554447ull;

  double judge_error(const SyntheticQuestion& q) const {
    // nothing to key an invalid question's answers against: a fair coin
    return q.valid ? effective_error(config_.judge_noise, config_.noise_difficulty_slope,
                                     q.difficulty)
                   : 0.5;
  }

  // persistent per-question key, derived from the world seed so repeated
  // verdicts on one question stay consistent
  bool role_key_inverted(uint64_t question_id, double eps, uint64_t tag) const {
    Rng key_rng(derive_seed(config_.seed, question_id, tag));
    return key_rng.next_bernoulli(eps);
  }

  // Score-position residual mass. The inverted-key residual softens toward
  // a coin as eps approaches saturation; the clean-key residual is pinned
  // by the calibration identity
  //   eps * (1 - e_inv) + (1 - eps) * e_clean = eps.
  static double score_residual_inverted(double eps) { return 0.5 * (2.0 * eps) * (2.0 * eps); }
  static double score_residual_clean(double eps) {
    if (eps >= 0.5) return 0.5;
    return eps * score_residual_inverted(eps) / (1.0 - eps);
  }

  // Reasoning-position residual mass: maximally torn under an inverted
  // key; under a clean key the role reasons crisply at moderate noise and
  // only degrades steeply as the channel approaches saturation.
  static double think_residual(double eps, bool key_inverted) {
    if (key_inverted) return 0.5;
    double x4 = (2.0 * eps) * (2.0 * eps);
    x4 *= x4;
    return 0.5 * x4 * x4 * x4;  // 0.5 * (2 eps)^12
  }

  // per-verdict residual with mean exactly `mean`
  double jitter_residual(double mean, Rng& rng) const {
    if (config_.channel_concentration <= 0.0 || mean <= 0.0 || mean >= 0.5) return mean;
    double kappa = config_.channel_concentration;
    return 0.5 * rng.next_beta(2.0 * mean * kappa, (1.0 - 2.0 * mean) * kappa);
  }

  // Two-band score emission. The verdict carries think_tokens width-1 band
  // positions followed by the score position; the score token is sampled
  // from the full-band distribution.
  RawVerdict emit_verdict(bool latent_flag, double eps, bool key_inverted, Rng& rng) const {
    bool emitted_band = latent_flag != key_inverted;
    RawVerdict verdict;
    verdict.format_ok = true;
    for (int t = 0; t < config_.think_tokens; ++t) {
      double e_think = jitter_residual(think_residual(eps, key_inverted), rng);
      verdict.emission.push_back(reasoning_distribution(emitted_band, e_think));
    }
    double e_score = jitter_residual(
        key_inverted ? score_residual_inverted(eps) : score_residual_clean(eps), rng);
    TokenDistribution score_dist = band_distribution(emitted_band, e_score, band_width_);
    verdict.emission.push_back(score_dist);
    verdict.score_span_begin = verdict.emission.size() - 1;
    verdict.score_span_end = verdict.emission.size();

    size_t idx = rng.next_weighted(score_dist.probs);
    verdict.score_token = config_.score_scale.min + static_cast<int>(idx);
    return verdict;
  }

  // mass 1 - eps uniform over the matching band, eps over the opposite
  // band; bands sit at the scale's extremes
  TokenDistribution band_distribution(bool latent_flag, double eps, int width) const {
    TokenDistribution dist;
    dist.probs.assign(static_cast<size_t>(vocab_), 0.0);
    double match_mass = (1.0 - eps) / width;
    double other_mass = eps / width;
    for (int k = 0; k < width; ++k) {
      int low = k;
      int high = vocab_ - width + k;
      dist.probs[static_cast<size_t>(latent_flag ? high : low)] += match_mass;
      dist.probs[static_cast<size_t>(latent_flag ? low : high)] += other_mass;
    }
    return dist;
  }

  // spike on the key band's center blended with a uniform component:
  // one-hot at e = 0, fully uniform at e = 0.5
  TokenDistribution reasoning_distribution(bool latent_flag, double e) const {
    TokenDistribution dist;
    dist.probs.assign(static_cast<size_t>(vocab_), 2.0 * e / vocab_);
    int center = latent_flag ? vocab_ - 1 - band_width_ / 2 : band_width_ / 2;
    dist.probs[static_cast<size_t>(center)] += 1.0 - 2.0 * e;
    return dist;
  }

  WorldConfig config_;
  int vocab_ = 10;
  int band_width_ = 3;
  uint64_t next_question_id_ = 0;
};

}  // namespace cose
