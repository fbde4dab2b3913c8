#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "cose/replay_buffer.hpp"
#include "cose/rng.hpp"

using namespace cose;
using Catch::Approx;

namespace {

QuestionRecord make_record(uint64_t id, double v, double c_v, int64_t step = 0) {
  QuestionRecord r;
  r.id = id;
  r.payload = "q" + std::to_string(id);
  r.v = v;
  r.c_v = c_v;
  r.insertion_step = step;
  return r;
}

// independent root finder for 4p(1-p) = level
double bisect_learnability_root(double level, double lo, double hi) {
  auto f = [&](double p) { return 4.0 * p * (1.0 - p) - level; };
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if ((f(lo) <= 0.0) == (f(mid) <= 0.0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("priority: confidence-weighted learnability with floor") {
  QuestionRecord r = make_record(1, 1.0, 1.0);
  r.judge_score_sum = 1.0;
  r.answer_count = 2;  // p = 0.5
  CHECK(priority(r) == Approx(1.0));

  r.judge_score_sum = 2.0;  // p = 1.0: learnability 0, floor active
  CHECK(priority(r) == Approx(0.1));

  QuestionRecord s = make_record(2, 0.8, 0.5);
  s.judge_score_sum = 1.0;
  s.answer_count = 4;  // p = 0.25, learnability 0.75
  CHECK(priority(s) == Approx(0.30));
}

TEST_CASE("priority: cold start treats unanswered questions as maximally learnable") {
  QuestionRecord r = make_record(1, 0.6, 0.5);
  CHECK(solve_rate(r) == Approx(0.5));
  CHECK(priority(r) == Approx(0.6 * 0.5 * 1.0));
}

TEST_CASE("priority: floor region boundaries match the bisection oracle") {
  double lo_root = bisect_learnability_root(0.1, 0.0, 0.5);
  double hi_root = bisect_learnability_root(0.1, 0.5, 1.0);
  CHECK(lo_root == Approx(0.0256583509747431).margin(1e-9));
  CHECK(hi_root == Approx(0.9743416490252569).margin(1e-9));
  // closed form (1 -+ sqrt(0.9)) / 2
  CHECK(lo_root == Approx((1.0 - std::sqrt(0.9)) / 2.0).margin(1e-12));
  CHECK(hi_root == Approx((1.0 + std::sqrt(0.9)) / 2.0).margin(1e-12));

  for (double p = 0.0; p <= 1.0 + 1e-12; p += 0.001) {
    QuestionRecord r = make_record(1, 1.0, 1.0);
    r.judge_score_sum = p * 1000.0;
    r.answer_count = 1000;
    bool floored = priority(r) == 0.1;
    bool outside = p < lo_root - 1e-9 || p > hi_root + 1e-9;
    bool inside = p > lo_root + 1e-9 && p < hi_root - 1e-9;
    if (outside) CHECK(floored);
    if (inside) CHECK_FALSE(floored);
  }
}

TEST_CASE("record_judgment: cumulative mean of judge scores") {
  ReplayBuffer buffer;
  buffer.insert(make_record(1, 1.0, 1.0));
  CHECK(buffer.record_judgment(1, 1.0) == Approx(1.0));
  CHECK(buffer.record_judgment(1, 0.0) == Approx(0.5));

  buffer.insert(make_record(2, 1.0, 1.0));
  CHECK(buffer.record_judgment(2, 0.7) == Approx(0.7));

  buffer.insert(make_record(3, 1.0, 1.0));
  for (double s : {0.8, 0.6, 0.4, 0.2}) buffer.record_judgment(3, s);
  CHECK(solve_rate(buffer.get(3)) == Approx(0.5));

  CHECK_THROWS_AS(buffer.record_judgment(99, 0.5), MissingRecordError);
  CHECK_THROWS_AS(buffer.record_judgment(1, 1.5), InvalidInputError);
}

TEST_CASE("property: solve rate equals brute-force mean over the judgment history") {
  Rng rng(5);
  ReplayBuffer buffer;
  buffer.insert(make_record(7, 1.0, 1.0));
  std::vector<double> history;
  for (int i = 0; i < 200; ++i) {
    double s = rng.next_double();
    history.push_back(s);
    double reported = buffer.record_judgment(7, s);
    double brute = 0.0;
    for (double h : history) brute += h;
    brute /= static_cast<double>(history.size());
    CHECK(reported == Approx(brute).margin(1e-12));
  }
}

TEST_CASE("insert: basic growth and duplicate rejection") {
  ReplayBuffer buffer(BufferConfig{4});
  InsertOutcome outcome = buffer.insert(make_record(1, 0.9, 0.9));
  CHECK(outcome.inserted);
  CHECK_FALSE(outcome.evicted_id.has_value());
  CHECK(buffer.size() == 1);
  CHECK_THROWS_AS(buffer.insert(make_record(1, 0.5, 0.5)), DuplicateIdError);
  CHECK(buffer.size() == 1);
}

TEST_CASE("insert: eviction removes the current minimum-priority record") {
  ReplayBuffer buffer(BufferConfig{3});
  // cold-start p = 0.5 for all, so priority = v * c_v
  buffer.insert(make_record(1, 1.0, 1.0, 0));   // priority 1.0
  buffer.insert(make_record(2, 0.5, 1.0, 1));   // priority 0.5
  buffer.insert(make_record(3, 0.2, 1.0, 2));   // priority 0.2

  SECTION("new priority above the minimum evicts the minimum") {
    InsertOutcome outcome = buffer.insert(make_record(4, 0.9, 1.0, 3));
    REQUIRE(outcome.evicted_id.has_value());
    CHECK(*outcome.evicted_id == 3);
    CHECK(buffer.size() == 3);
    CHECK(buffer.contains(4));
  }

  SECTION("new priority below the minimum still gets inserted") {
    InsertOutcome outcome = buffer.insert(make_record(5, 0.15, 1.0, 3));
    REQUIRE(outcome.evicted_id.has_value());
    CHECK(*outcome.evicted_id == 3);  // previous minimum evicted first
    CHECK(buffer.contains(5));
    // the new record is now the minimum: the next insertion evicts it
    InsertOutcome next = buffer.insert(make_record(6, 0.9, 1.0, 4));
    REQUIRE(next.evicted_id.has_value());
    CHECK(*next.evicted_id == 5);
  }
}

TEST_CASE("insert: priority ties evict the oldest record") {
  ReplayBuffer buffer(BufferConfig{2});
  buffer.insert(make_record(10, 0.5, 1.0, 5));
  buffer.insert(make_record(11, 0.5, 1.0, 2));  // same priority, older step
  InsertOutcome outcome = buffer.insert(make_record(12, 0.5, 1.0, 9));
  REQUIRE(outcome.evicted_id.has_value());
  CHECK(*outcome.evicted_id == 11);
}

TEST_CASE("property: capacity never exceeded and evictions always hit the minimum") {
  Rng rng(123);
  ReplayBuffer buffer(BufferConfig{8});
  for (int i = 0; i < 100; ++i) {
    // brute-force minimum before the insert
    std::optional<uint64_t> expected_victim;
    if (buffer.size() == 8) {
      double best = 1e300;
      int64_t best_step = 0;
      for (const QuestionRecord& r : buffer.records()) {
        double p = priority(r);
        if (p < best || (p == best && r.insertion_step < best_step)) {
          best = p;
          best_step = r.insertion_step;
          expected_victim = r.id;
        }
      }
    }
    QuestionRecord r = make_record(1000 + i, rng.next_double(), rng.next_double(), i);
    if (rng.next_bernoulli(0.5)) {
      r.answer_count = 1 + rng.next_below(5);
      r.judge_score_sum = r.answer_count * rng.next_double();
    }
    InsertOutcome outcome = buffer.insert(r);
    CHECK(buffer.size() <= 8);
    if (expected_victim) {
      REQUIRE(outcome.evicted_id.has_value());
      CHECK(*outcome.evicted_id == *expected_victim);
    } else {
      CHECK_FALSE(outcome.evicted_id.has_value());
    }
  }
}

TEST_CASE("sample: single record always wins; empty buffer is an error") {
  ReplayBuffer buffer;
  Rng rng(1);
  CHECK_THROWS_AS(buffer.sample(1, rng), EmptyBufferError);
  buffer.insert(make_record(42, 0.7, 0.7));
  for (uint64_t id : buffer.sample(50, rng)) CHECK(id == 42);
}

TEST_CASE("sample: frequencies track priorities (Monte Carlo)") {
  ReplayBuffer buffer;
  buffer.insert(make_record(1, 0.9, 1.0));  // priority 0.9
  buffer.insert(make_record(2, 0.1, 1.0));  // priority 0.1
  Rng rng(2024);
  size_t first = 0;
  const size_t n = 100000;
  for (uint64_t id : buffer.sample(n, rng)) {
    if (id == 1) ++first;
  }
  CHECK(static_cast<double>(first) / n == Approx(0.9).margin(0.01));
}

TEST_CASE("sample: equal priorities give uniform frequencies") {
  ReplayBuffer buffer;
  for (uint64_t id = 0; id < 16; ++id) buffer.insert(make_record(id, 0.8, 0.5));
  Rng rng(99);
  std::map<uint64_t, size_t> counts;
  const size_t n = 100000;
  for (uint64_t id : buffer.sample(n, rng)) counts[id]++;
  double expected = n / 16.0;
  double chi2 = 0.0;
  for (auto& [id, c] : counts) {
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // chi-square with 15 dof: 99.9% quantile is 37.7
  CHECK(chi2 < 37.7);
}

TEST_CASE("sample: custom priority function overrides the default") {
  ReplayBuffer buffer;
  buffer.insert(make_record(1, 1.0, 1.0));
  buffer.insert(make_record(2, 0.1, 0.1));
  Rng rng(7);
  // force all sampling mass onto record 2
  auto only_two = [](const QuestionRecord& r) { return r.id == 2 ? 1.0 : 0.0; };
  for (uint64_t id : buffer.sample(100, rng, only_two)) CHECK(id == 2);
}

TEST_CASE("snapshot: round-trip reproduces identical priorities bit for bit") {
  ReplayBuffer buffer(BufferConfig{64});
  Rng rng(31337);
  for (uint64_t id = 0; id < 20; ++id) {
    QuestionRecord r = make_record(id, rng.next_double(), rng.next_double(),
                                   static_cast<int64_t>(id));
    r.payload = "s=3 d=0.25 valid=1";
    r.answer_count = rng.next_below(6);
    r.judge_score_sum = r.answer_count ? r.answer_count * rng.next_double() : 0.0;
    buffer.insert(r);
  }
  std::ostringstream out;
  buffer.save_snapshot(out);
  std::istringstream in(out.str());
  ReplayBuffer reloaded = ReplayBuffer::load_snapshot(in, BufferConfig{64});

  REQUIRE(reloaded.size() == buffer.size());
  for (const QuestionRecord& r : buffer.records()) {
    const QuestionRecord& q = reloaded.get(r.id);
    CHECK(priority(q) == priority(r));  // exact, not approximate
    CHECK(q.v == r.v);
    CHECK(q.c_v == r.c_v);
    CHECK(q.judge_score_sum == r.judge_score_sum);
    CHECK(q.answer_count == r.answer_count);
    CHECK(q.insertion_step == r.insertion_step);
    CHECK(q.payload == r.payload);
  }

  // a second save produces identical bytes
  std::ostringstream again;
  reloaded.save_snapshot(again);
  CHECK(again.str() == out.str());
}

TEST_CASE("snapshot: malformed lines are rejected") {
  std::istringstream bad("1\t0.5\t0.5\n");
  CHECK_THROWS_AS(ReplayBuffer::load_snapshot(bad), InvalidInputError);
  std::istringstream bad2("1\tx\t0.5\t0\t0\t0\tpayload\n");
  CHECK_THROWS_AS(ReplayBuffer::load_snapshot(bad2), InvalidInputError);
}

TEST_CASE("record validation at insert") {
  ReplayBuffer buffer;
  QuestionRecord r = make_record(1, 1.2, 0.5);
  CHECK_THROWS_AS(buffer.insert(r), InvalidInputError);
  r = make_record(2, 0.5, 0.5);
  r.answer_count = 1;
  r.judge_score_sum = 2.0;  // implies p > 1
  CHECK_THROWS_AS(buffer.insert(r), InvalidInputError);
}
