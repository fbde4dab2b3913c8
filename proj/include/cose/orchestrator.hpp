#pragma once

/**
 * The two-stage self-evolution loop.
 *
 * Each iteration: (1) the Proposer generates candidate questions, the
 * Validator scores them, accepted ones enter the replay buffer and receive
 * a burst of judged Solver rollouts to initialize their solve rate, and the
 * Proposer takes one confidence-weighted PPO step; (2) the Solver samples
 * questions from the buffer by priority, answers them, the Judge scores the
 * answers, and the Solver takes one confidence-weighted PPO step.
 *
 * The Validator and Judge are inference-only: their emissions are consumed
 * by the feedback channel and never become optimizer trajectories. An audit
 * counter tracks the provenance of every optimized sample.
 *
 * Everything draws from streams derived from the run seed; per-question
 * streams are keyed by (seed, question id, answer index) so rollouts could
 * run in any order without changing the result.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cose/credit.hpp"
#include "cose/errors.hpp"
#include "cose/feedback.hpp"
#include "cose/policy.hpp"
#include "cose/ppo.hpp"
#include "cose/replay_buffer.hpp"
#include "cose/rng.hpp"
#include "cose/synthetic_world.hpp"

namespace cose {

enum class AblationMode {
  full,          // confidence weights + priority sampling
  no_weighting,  // all PPO weights forced to 1.0
  no_priority,   // uniform buffer sampling
  one_minus_p,   // learnability term replaced by pure difficulty 1 - p
};

inline const char* ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::no_weighting: return "no_weighting";
    case AblationMode::no_priority: return "no_priority";
    case AblationMode::one_minus_p: return "one_minus_p";
  }
  return "unknown";
}

inline AblationMode ablation_mode_from_name(const std::string& name) {
  if (name == "full") return AblationMode::full;
  if (name == "no_weighting") return AblationMode::no_weighting;
  if (name == "no_priority") return AblationMode::no_priority;
  if (name == "one_minus_p") return AblationMode::one_minus_p;
  throw InvalidInputError("unknown ablation mode: " + name);
}

struct LoopConfig {
  int total_steps = 200;
  int proposer_phase_period = 1;  // K: proposer phase runs every K steps
  int proposals_per_phase = 16;
  int solver_batch_size = 64;
  int init_rollouts = 4;  // m judged rollouts to initialize p(q)
  double validator_accept_threshold = 0.5;  // tau_v
  AblationMode ablation = AblationMode::full;
  bool trace_samples = false;
  int probe_size = 24;
};

inline void validate_loop_config(const LoopConfig& config) {
  if (config.total_steps < 0) throw InvalidInputError("LoopConfig: total_steps < 0");
  if (config.proposer_phase_period < 1) {
    throw InvalidInputError("LoopConfig: proposer_phase_period must be >= 1");
  }
  if (config.proposals_per_phase < 1) {
    throw InvalidInputError("LoopConfig: proposals_per_phase must be >= 1");
  }
  if (config.solver_batch_size < 1) {
    throw InvalidInputError("LoopConfig: solver_batch_size must be >= 1");
  }
  if (config.init_rollouts < 1) throw InvalidInputError("LoopConfig: init_rollouts must be >= 1");
  if (!(config.validator_accept_threshold >= 0.0 && config.validator_accept_threshold <= 1.0)) {
    throw InvalidInputError("LoopConfig: validator_accept_threshold outside [0, 1]");
  }
  if (config.probe_size < 1) throw InvalidInputError("LoopConfig: probe_size must be >= 1");
}

struct IterationReport {
  int step = 0;
  int proposed = 0;
  int accepted = 0;
  int solved = 0;
  double mean_v = 0.0;
  double mean_c_v = 0.0;
  double mean_c_j = 0.0;
  double mean_w_s = 0.0;
  double mean_reward_proposer = 0.0;
  double mean_reward_solver = 0.0;
  int buffer_size = 0;
  double probe_accuracy = 0.0;
  double wall_time_ms = 0.0;  // informational; not part of the metrics stream
};

// per-sample trace for the qualitative weight inspection command
struct SampleTrace {
  int step = 0;
  Role role = Role::Solver;
  double v = 0.0;
  double c_v = 0.0;
  double c_j = 0.0;
  double weight = 0.0;
  double reward = 0.0;
  bool latent_correct = false;
};

// provenance counts of samples that reached the optimizer
struct OptimizationAudit {
  uint64_t proposer_samples = 0;
  uint64_t solver_samples = 0;
  uint64_t validator_samples = 0;  // must stay 0: inference-only role
  uint64_t judge_samples = 0;      // must stay 0: inference-only role
};

class Orchestrator {
 public:
  Orchestrator(const WorldConfig& world_config, const LoopConfig& loop_config,
               const OptimizerConfig& optimizer_config, const BufferConfig& buffer_config,
               SignalKind signal_kind, uint64_t seed, bool score_span_only = false)
      : world_(with_seed(world_config, seed)),
        loop_(loop_config),
        optimizer_(optimizer_config),
        buffer_(buffer_config),
        seed_(seed),
        rng_propose_(derive_seed(seed, 0x50524f50ull)),   // proposer stream
        rng_sample_(derive_seed(seed, 0x53414d50ull)),    // buffer sampling stream
        proposer_params_(world_.make_proposer_params()),
        solver_params_(world_config.skill_dim, 2),
        proposer_ref_(proposer_params_),
        solver_ref_(solver_params_) {
    validate_loop_config(loop_config);
    validate_optimizer_config(optimizer_config);
    optimizer_.total_steps = loop_.total_steps;
    assess_options_.kind = signal_kind;
    assess_options_.score_span_only = score_span_only;
    probe_ = world_.make_probe_set(static_cast<size_t>(loop_.probe_size));
  }

  // Runs one full iteration (proposer phase if due, then solver phase) and
  // returns its report.
  IterationReport run_step() {
    auto started = std::chrono::steady_clock::now();
    IterationReport report;
    report.step = step_;
    c_j_step_sum_ = 0.0;
    c_j_step_count_ = 0;
    if (step_ % loop_.proposer_phase_period == 0) {
      propose_validate_phase(report);
    }
    solve_judge_phase(report);
    if (c_j_step_count_ > 0) report.mean_c_j = c_j_step_sum_ / c_j_step_count_;
    report.buffer_size = static_cast<int>(buffer_.size());
    report.probe_accuracy = world_.ground_truth_accuracy(solver_params_, probe_);
    report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();
    ++step_;
    return report;
  }

  template <typename Callback>
  std::vector<IterationReport> run(Callback&& on_report) {
    std::vector<IterationReport> reports;
    reports.reserve(static_cast<size_t>(loop_.total_steps));
    while (step_ < loop_.total_steps) {
      reports.push_back(run_step());
      on_report(reports.back());
    }
    return reports;
  }

  std::vector<IterationReport> run() {
    return run([](const IterationReport&) {});
  }

  // --- state access -------------------------------------------------------

  const SyntheticWorld& world() const { return world_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const PolicyParams& proposer_params() const { return proposer_params_; }
  const PolicyParams& solver_params() const { return solver_params_; }
  const std::vector<SyntheticQuestion>& probe_set() const { return probe_; }
  const OptimizationAudit& audit() const { return audit_; }
  const std::vector<SampleTrace>& traces() const { return traces_; }
  const RolloutBatch& last_proposer_batch() const { return last_proposer_batch_; }
  const RolloutBatch& last_solver_batch() const { return last_solver_batch_; }
  int step_index() const { return step_; }

  double probe_accuracy() const {
    return world_.ground_truth_accuracy(solver_params_, probe_);
  }

  // sampling distribution used by the solver phase under the active ablation
  PriorityFn sampling_priority() const {
    switch (loop_.ablation) {
      case AblationMode::no_priority:
        return [](const QuestionRecord&) { return 1.0; };
      case AblationMode::one_minus_p:
        return [](const QuestionRecord& r) {
          return r.v * r.c_v * std::max(1.0 - solve_rate(r), kPriorityFloor);
        };
      default:
        return nullptr;  // default confidence-weighted learnability priority
    }
  }

 private:
  // the run seed governs everything, including the world's per-question keys
  static WorldConfig with_seed(WorldConfig config, uint64_t seed) {
    config.seed = seed;
    return config;
  }

  // stream tags for per-question rng derivation
  static constexpr uint64_t kStreamValidate = 1ull << 40;
  static constexpr uint64_t kStreamSolve = 2ull << 40;
  static constexpr uint64_t kStreamJudge = 3ull << 40;

  Rng question_rng(uint64_t question_id, uint64_t tag) const {
    return Rng(derive_seed(seed_, question_id, tag));
  }

  void propose_validate_phase(IterationReport& report) {
    RolloutBatch batch;
    double v_sum = 0.0;
    double c_v_sum = 0.0;
    double reward_sum = 0.0;

    for (int j = 0; j < loop_.proposals_per_phase; ++j) {
      SyntheticQuestion q = world_.propose(proposer_params_, rng_propose_);
      ++report.proposed;

      Rng v_rng = question_rng(q.id, kStreamValidate);
      RawVerdict verdict = world_.validate(q, v_rng);
      FeedbackResult fb =
          assess(verdict, world_.config().score_scale, Role::Validator, assess_options_);
      v_sum += fb.normalized_score;
      c_v_sum += fb.confidence;

      bool accepted =
          fb.format_ok && fb.normalized_score >= loop_.validator_accept_threshold;
      double p_q = 0.0;  // no solve evidence yet: no learnability credit
      if (accepted) {
        QuestionRecord record;
        record.id = q.id;
        record.payload = SyntheticWorld::question_payload(q);
        record.v = fb.normalized_score;
        record.c_v = fb.confidence;
        record.insertion_step = step_;
        buffer_.insert(record);
        ++report.accepted;
        for (int k = 0; k < loop_.init_rollouts; ++k) {
          run_judged_rollout(q, report, nullptr);
        }
        p_q = solve_rate(buffer_.get(q.id));
      }

      RewardRecord reward = proposer_reward(true, fb.normalized_score, p_q);
      UpdateWeight weight =
          proposer_weight(fb.normalized_score, fb.confidence, optimizer_.weight_floor);
      double w = loop_.ablation == AblationMode::no_weighting ? 1.0 : weight.value;
      reward_sum += reward.value;

      RolloutSample sample;
      sample.steps = world_.proposer_steps(q);
      sample.logp_behavior = log_prob(proposer_params_, sample);
      sample.logp_reference = log_prob(proposer_ref_, sample);
      sample.reward = reward.value;
      sample.weight = w;
      batch.samples.push_back(std::move(sample));

      if (loop_.trace_samples) {
        traces_.push_back({step_, Role::Proposer, fb.normalized_score, fb.confidence, 0.0, w,
                           reward.value, q.valid});
      }
    }

    if (!batch.samples.empty()) {
      proposer_params_ = step(proposer_params_, proposer_ref_, batch, optimizer_, step_);
      audit_.proposer_samples += batch.samples.size();
      last_proposer_batch_ = std::move(batch);
    }
    report.mean_v = v_sum / report.proposed;
    report.mean_c_v = c_v_sum / report.proposed;
    report.mean_reward_proposer = reward_sum / report.proposed;
  }

  void solve_judge_phase(IterationReport& report) {
    if (buffer_.empty()) {
      // nothing to practice on this iteration; counts stay 0
      return;
    }
    std::vector<uint64_t> ids = buffer_.sample(static_cast<size_t>(loop_.solver_batch_size),
                                               rng_sample_, sampling_priority());
    RolloutBatch batch;
    double w_sum = 0.0;
    double reward_sum = 0.0;

    for (uint64_t id : ids) {
      const QuestionRecord& record = buffer_.get(id);
      SyntheticQuestion q = SyntheticWorld::question_from_payload(id, record.payload);
      double v = record.v;
      double c_v = record.c_v;

      JudgedRollout rollout;
      run_judged_rollout(q, report, &rollout);

      bool f_s = format_check(rollout.answer.text_tokens, kAnswerTags);
      RewardRecord reward = solver_reward(f_s, rollout.p_qa);
      UpdateWeight weight = solver_weight(v, c_v, rollout.c_j, optimizer_.weight_floor);
      double w = loop_.ablation == AblationMode::no_weighting ? 1.0 : weight.value;
      w_sum += w;
      reward_sum += reward.value;

      RolloutSample sample;
      sample.steps = {solver_step_of(q, rollout.answer)};
      sample.logp_behavior = log_prob(solver_params_, sample);
      sample.logp_reference = log_prob(solver_ref_, sample);
      sample.reward = reward.value;
      sample.weight = w;
      batch.samples.push_back(std::move(sample));
      ++report.solved;

      if (loop_.trace_samples) {
        traces_.push_back({step_, Role::Solver, v, c_v, rollout.c_j, w, reward.value,
                           rollout.answer.correct});
      }
    }

    solver_params_ = step(solver_params_, solver_ref_, batch, optimizer_, step_);
    audit_.solver_samples += batch.samples.size();
    last_solver_batch_ = std::move(batch);
    report.mean_w_s = w_sum / report.solved;
    report.mean_reward_solver = reward_sum / report.solved;
  }

  struct JudgedRollout {
    SyntheticAnswer answer;
    double p_qa = 0.0;
    double c_j = 0.0;
  };

  // One solve + judge + solve-rate update for question q. The rng streams
  // are keyed by (question id, answer index) so the draw sequence does not
  // depend on which phase or step issued the rollout.
  void run_judged_rollout(const SyntheticQuestion& q, IterationReport&, JudgedRollout* out) {
    uint64_t answer_index = buffer_.get(q.id).answer_count;
    Rng s_rng = question_rng(q.id, kStreamSolve + answer_index);
    Rng j_rng = question_rng(q.id, kStreamJudge + answer_index);

    SyntheticAnswer answer = world_.solve(solver_params_, q, s_rng);
    RawVerdict verdict = world_.judge(answer, q, j_rng);
    FeedbackResult fb =
        assess(verdict, world_.config().score_scale, Role::Judge, assess_options_);
    buffer_.record_judgment(q.id, fb.normalized_score);

    c_j_step_sum_ += fb.confidence;
    ++c_j_step_count_;

    if (out) {
      out->answer = std::move(answer);
      out->p_qa = fb.normalized_score;
      out->c_j = fb.confidence;
    }
  }

  TrajectoryStep solver_step_of(const SyntheticQuestion& q, const SyntheticAnswer& a) const {
    double d = std::clamp(q.difficulty, 1e-3, 1.0 - 1e-3);
    return {q.skill_index, a.correct ? 1 : 0, {0.0, -logit(d)}};
  }

  SyntheticWorld world_;
  LoopConfig loop_;
  OptimizerConfig optimizer_;
  ReplayBuffer buffer_;
  AssessOptions assess_options_;
  uint64_t seed_ = 0;
  Rng rng_propose_;
  Rng rng_sample_;
  PolicyParams proposer_params_;
  PolicyParams solver_params_;
  PolicyParams proposer_ref_;
  PolicyParams solver_ref_;
  std::vector<SyntheticQuestion> probe_;
  OptimizationAudit audit_;
  std::vector<SampleTrace> traces_;
  RolloutBatch last_proposer_batch_;
  RolloutBatch last_solver_batch_;
  int step_ = 0;

  // judge-confidence accumulation for the current iteration's report
  double c_j_step_sum_ = 0.0;
  int c_j_step_count_ = 0;
};

}  // namespace cose
