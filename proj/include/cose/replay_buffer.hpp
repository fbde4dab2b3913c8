#pragma once

/**
 * Replay buffer with confidence-weighted learnability priorities.
 *
 * Each stored question carries its validation score v, the Validator
 * confidence c_v (both frozen at insertion), and the running solve-rate
 * statistics from Judge scores. Sampling is proportional to
 *
 *   priority(q) = v * c_v * max(4 p(q)(1 - p(q)), 0.1)
 *
 * where p(q) is the cumulative mean of Judge scores over all answers for q
 * and unanswered questions use p = 0.5 (maximally learnable cold start).
 * When the buffer is full, the lowest-priority record is evicted before
 * insertion, ties broken by oldest insertion step.
 *
 * Capacity stays small (default 8192) so sampling is a linear scan; no
 * sum-tree machinery.
 */

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "cose/errors.hpp"
#include "cose/rng.hpp"

namespace cose {

inline constexpr double kPriorityFloor = 0.1;
inline constexpr double kColdStartSolveRate = 0.5;

struct QuestionRecord {
  uint64_t id = 0;
  std::string payload;          // opaque question descriptor
  double v = 0.0;               // validation score in [0, 1]
  double c_v = 0.0;             // validator confidence in [0, 1]
  double judge_score_sum = 0.0; // sum of p(q,a) over judged answers
  uint64_t answer_count = 0;    // |A_q|
  int64_t insertion_step = 0;
};

// Cumulative-mean solve rate; cold start at 0.5 until the first judgment.
inline double solve_rate(const QuestionRecord& record) {
  if (record.answer_count == 0) return kColdStartSolveRate;
  return record.judge_score_sum / static_cast<double>(record.answer_count);
}

inline double priority(const QuestionRecord& record, double floor = kPriorityFloor) {
  double p = solve_rate(record);
  double learn = 4.0 * p * (1.0 - p);
  return record.v * record.c_v * std::max(learn, floor);
}

struct BufferConfig {
  size_t capacity = 8192;
  double priority_floor = kPriorityFloor;
};

struct InsertOutcome {
  bool inserted = false;
  std::optional<uint64_t> evicted_id;
};

using PriorityFn = std::function<double(const QuestionRecord&)>;

class ReplayBuffer {
 public:
  explicit ReplayBuffer(BufferConfig config = {}) : config_(config) {
    if (config_.capacity < 1) throw InvalidInputError("ReplayBuffer: capacity must be >= 1");
  }

  size_t size() const { return records_.size(); }
  size_t capacity() const { return config_.capacity; }
  bool empty() const { return records_.empty(); }

  bool contains(uint64_t id) const { return index_.count(id) > 0; }

  const QuestionRecord& get(uint64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw MissingRecordError("ReplayBuffer: no record with id " + std::to_string(id));
    }
    return records_[it->second];
  }

  const std::vector<QuestionRecord>& records() const { return records_; }

  // Inserts a record, evicting the current minimum-priority record first if
  // the buffer is full. The new record is inserted even when its own
  // priority is below the evicted minimum.
  InsertOutcome insert(const QuestionRecord& record) {
    validate_record(record);
    if (!(config_.priority_floor > 0.0)) {
      throw InvalidInputError("ReplayBuffer: priority floor must be positive");
    }
    if (index_.count(record.id) > 0) {
      throw DuplicateIdError("ReplayBuffer: duplicate id " + std::to_string(record.id));
    }
    InsertOutcome outcome;
    if (records_.size() >= config_.capacity) {
      size_t victim = min_priority_index();
      outcome.evicted_id = records_[victim].id;
      erase_at(victim);
    }
    index_[record.id] = records_.size();
    records_.push_back(record);
    outcome.inserted = true;
    return outcome;
  }

  // Adds one Judge score to the record's solve-rate statistics and returns
  // the updated cumulative mean.
  double record_judgment(uint64_t id, double p_qa) {
    if (!(p_qa >= 0.0 && p_qa <= 1.0)) {
      throw InvalidInputError("record_judgment: p_qa = " + std::to_string(p_qa) +
                              " outside [0, 1]");
    }
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw MissingRecordError("record_judgment: no record with id " + std::to_string(id));
    }
    QuestionRecord& record = records_[it->second];
    record.judge_score_sum += p_qa;
    record.answer_count += 1;
    return solve_rate(record);
  }

  // n i.i.d. draws with replacement, each proportional to priority_fn
  // (default: the confidence-weighted learnability priority). Priorities
  // are recomputed at sample time.
  std::vector<uint64_t> sample(size_t n, Rng& rng,
                               const PriorityFn& priority_fn = nullptr) const {
    if (records_.empty()) throw EmptyBufferError("ReplayBuffer: sample from empty buffer");
    std::vector<double> weights(records_.size());
    for (size_t i = 0; i < records_.size(); ++i) {
      weights[i] = priority_fn ? priority_fn(records_[i])
                               : priority(records_[i], config_.priority_floor);
      if (!(weights[i] >= 0.0)) {
        throw InvalidInputError("ReplayBuffer: negative priority for id " +
                                std::to_string(records_[i].id));
      }
    }
    std::vector<uint64_t> out;
    out.reserve(n);
    for (size_t k = 0; k < n; ++k) {
      out.push_back(records_[rng.next_weighted(weights)].id);
    }
    return out;
  }

  // --- snapshot -----------------------------------------------------------
  // One record per line, tab-separated:
  //   id  v  c_v  judge_score_sum  answer_count  insertion_step  payload
  // Floats use shortest round-trip formatting so a reload reproduces the
  // stored priorities bit for bit.

  void save_snapshot(std::ostream& out) const {
    for (const QuestionRecord& r : records_) {
      out << r.id << '\t' << format_double(r.v) << '\t' << format_double(r.c_v) << '\t'
          << format_double(r.judge_score_sum) << '\t' << r.answer_count << '\t'
          << r.insertion_step << '\t' << r.payload << '\n';
    }
  }

  static ReplayBuffer load_snapshot(std::istream& in, BufferConfig config = {}) {
    ReplayBuffer buffer(config);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      buffer.insert(parse_snapshot_line(line, line_no));
    }
    return buffer;
  }

  static std::string format_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
  }

 private:
  static void validate_record(const QuestionRecord& record) {
    if (!(record.v >= 0.0 && record.v <= 1.0)) {
      throw InvalidInputError("QuestionRecord: v outside [0, 1]");
    }
    if (!(record.c_v >= 0.0 && record.c_v <= 1.0)) {
      throw InvalidInputError("QuestionRecord: c_v outside [0, 1]");
    }
    if (!(record.judge_score_sum >= 0.0)) {
      throw InvalidInputError("QuestionRecord: negative judge_score_sum");
    }
    if (record.answer_count > 0 &&
        record.judge_score_sum > static_cast<double>(record.answer_count) + 1e-9) {
      throw InvalidInputError("QuestionRecord: solve rate above 1");
    }
  }

  size_t min_priority_index() const {
    size_t best = 0;
    double best_priority = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < records_.size(); ++i) {
      double p = priority(records_[i], config_.priority_floor);
      bool better = p < best_priority;
      bool tie = p == best_priority;
      if (tie) {
        // oldest first, then smallest id for total determinism
        const QuestionRecord& a = records_[i];
        const QuestionRecord& b = records_[best];
        better = a.insertion_step < b.insertion_step ||
                 (a.insertion_step == b.insertion_step && a.id < b.id);
      }
      if (better) {
        best = i;
        best_priority = p;
      }
    }
    return best;
  }

  void erase_at(size_t pos) {
    index_.erase(records_[pos].id);
    if (pos + 1 != records_.size()) {
      records_[pos] = std::move(records_.back());
      index_[records_[pos].id] = pos;
    }
    records_.pop_back();
  }

  static QuestionRecord parse_snapshot_line(const std::string& line, size_t line_no) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (int i = 0; i < 6; ++i) {
      size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        throw InvalidInputError("snapshot line " + std::to_string(line_no) +
                                ": expected 7 tab-separated fields");
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    QuestionRecord r;
    r.id = parse_u64(fields[0], line_no);
    r.v = parse_d(fields[1], line_no);
    r.c_v = parse_d(fields[2], line_no);
    r.judge_score_sum = parse_d(fields[3], line_no);
    r.answer_count = parse_u64(fields[4], line_no);
    r.insertion_step = static_cast<int64_t>(parse_i64(fields[5], line_no));
    r.payload = line.substr(start);
    return r;
  }

  static uint64_t parse_u64(const std::string& s, size_t line_no) {
    uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw InvalidInputError("snapshot line " + std::to_string(line_no) +
                              ": bad integer field '" + s + "'");
    }
    return v;
  }

  static long long parse_i64(const std::string& s, size_t line_no) {
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw InvalidInputError("snapshot line " + std::to_string(line_no) +
                              ": bad integer field '" + s + "'");
    }
    return v;
  }

  static double parse_d(const std::string& s, size_t line_no) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw InvalidInputError("snapshot line " + std::to_string(line_no) +
                              ": bad float field '" + s + "'");
    }
    return v;
  }

  BufferConfig config_;
  std::vector<QuestionRecord> records_;
  std::unordered_map<uint64_t, size_t> index_;
};

}  // namespace cose
