#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cose/experiment.hpp"

using namespace cose;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// small, fast configuration for artifact tests
RunConfig tiny_config(const std::string& out_dir) {
  RunConfig cfg = desk_profile();
  cfg.world.validator_noise = 0.2;
  cfg.world.judge_noise = 0.2;
  cfg.loop.total_steps = 4;
  cfg.loop.proposals_per_phase = 8;
  cfg.loop.solver_batch_size = 8;
  cfg.seed = 5;
  cfg.out_dir = out_dir;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("cose_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string sub(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("config: serialize then parse round-trips exactly") {
  RunConfig cfg = desk_profile();
  cfg.world.validator_noise = 0.3;
  cfg.world.noise_difficulty_slope = 0.4;
  cfg.loop.ablation = AblationMode::one_minus_p;
  cfg.loop.trace_samples = true;
  cfg.signal_kind = SignalKind::margin;
  cfg.score_span_only = true;
  cfg.seed = 1234567;
  cfg.out_dir = "runs/xyz";

  std::string text = serialize_run_config_string(cfg);
  RunConfig back = parse_run_config_string(text);
  CHECK(serialize_run_config_string(back) == text);
  CHECK(back.world.validator_noise == cfg.world.validator_noise);
  CHECK(back.loop.ablation == cfg.loop.ablation);
  CHECK(back.signal_kind == cfg.signal_kind);
  CHECK(back.seed == cfg.seed);
  CHECK(back.out_dir == cfg.out_dir);
}

TEST_CASE("config: unknown keys and malformed lines are rejected with diagnostics") {
  CHECK_THROWS_AS(parse_run_config_string("[world]\nskll_dim = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_string("[worlds]\nskill_dim = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_string("skill_dim = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_string("[world]\nskill_dim == 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_string("[world]\nskill_dim = eight\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config_string("[signal]\nkind = entropyish\n"), InvalidInputError);

  try {
    parse_run_config_string("[loop]\ntotal_steps = 5\nbatchsize = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string what = e.what();
    CHECK(what.find("batchsize") != std::string::npos);
    CHECK(what.find("loop") != std::string::npos);
  }
}

TEST_CASE("config: the shipped profiles parse and resolve") {
  for (const char* name : {"configs/desk.ini", "configs/paper.ini"}) {
    std::ifstream in(fs::path(COSE_SOURCE_DIR) / name);
    REQUIRE(in.good());
    RunConfig cfg = parse_run_config(in);
    CHECK(cfg.loop.total_steps == 200);
    CHECK(cfg.buffer.capacity == 8192);
    // a profile must be usable as-is
    Orchestrator orch(cfg.world, cfg.loop, cfg.optimizer, cfg.buffer, cfg.signal_kind, cfg.seed);
    CHECK(orch.probe_set().size() == 24);
  }
  std::ifstream desk(fs::path(COSE_SOURCE_DIR) / "configs/desk.ini");
  CHECK(parse_run_config(desk).optimizer.learning_rate == 96.0);
}

TEST_CASE("config: overrides layer on top of a base profile") {
  RunConfig cfg = parse_run_config_string("[optimizer]\nlearning_rate = 2.5\n", desk_profile());
  CHECK(cfg.optimizer.learning_rate == 2.5);
  CHECK(cfg.loop.total_steps == desk_profile().loop.total_steps);
}

TEST_CASE("metrics: line round-trip and schema checks") {
  IterationReport r;
  r.step = 3;
  r.proposed = 8;
  r.accepted = 5;
  r.solved = 16;
  r.mean_v = 1.0 / 3.0;
  r.mean_c_v = 0.25;
  r.mean_c_j = 0.5;
  r.mean_w_s = 0.125;
  r.mean_reward_proposer = 0.75;
  r.mean_reward_solver = 2.0 / 3.0;
  r.buffer_size = 40;
  r.probe_accuracy = 0.654321987;

  std::string line = serialize_metrics_line(r);
  IterationReport back = parse_metrics_line(line);
  CHECK(back.step == r.step);
  CHECK(back.solved == r.solved);
  CHECK(back.mean_v == Approx(r.mean_v).epsilon(1e-5));        // 6 significant digits
  CHECK(back.probe_accuracy == Approx(0.654322).epsilon(1e-9));  // rounded at 6
  CHECK(serialize_metrics_line(back) == serialize_metrics_line(back));

  CHECK_THROWS_AS(parse_metrics_line("{\"step\":1}"), InvalidInputError);
  CHECK_THROWS_AS(parse_metrics_line("not json"), InvalidInputError);

  std::istringstream stream(line + "\n" + "garbage\n" + line + "\n");
  CHECK_THROWS_AS(read_metrics(stream), InvalidInputError);  // steps not increasing

  IterationReport r2 = r;
  r2.step = 4;
  std::istringstream ok_stream(line + "\ngarbage\n" + serialize_metrics_line(r2) + "\n");
  std::ostringstream warnings;
  ParsedMetrics parsed = read_metrics(ok_stream, &warnings);
  CHECK(parsed.reports.size() == 2);
  CHECK(parsed.skipped_lines == 1);
  CHECK_FALSE(warnings.str().empty());

  std::istringstream empty_stream("");
  CHECK_THROWS_AS(read_metrics(empty_stream), InvalidInputError);
}

TEST_CASE("run experiment: artifacts land in the output directory") {
  TempDir tmp("artifacts");
  RunConfig cfg = tiny_config(tmp.sub("run_a"));
  RunResult result = run_experiment(cfg);

  CHECK(fs::exists(result.out_dir / kMetricsFile));
  CHECK(fs::exists(result.out_dir / kSnapshotFile));
  CHECK(fs::exists(result.out_dir / kPolicyFile));
  CHECK(fs::exists(result.out_dir / kResolvedConfigFile));
  CHECK(fs::exists(result.out_dir / kProbeFile));
  CHECK_FALSE(fs::exists(result.out_dir / kTraceFile));  // tracing off by default
  CHECK(result.reports.size() == 4);

  // metrics parse and steps increase
  std::ifstream metrics(result.out_dir / kMetricsFile);
  ParsedMetrics parsed = read_metrics(metrics);
  CHECK(parsed.reports.size() == 4);
  CHECK(parsed.skipped_lines == 0);

  // the resolved config reloads to the same configuration
  std::ifstream cfg_in(result.out_dir / kResolvedConfigFile);
  RunConfig reloaded = parse_run_config(cfg_in);
  RunConfig resolved = cfg;
  resolved.world.seed = cfg.seed;
  CHECK(serialize_run_config_string(reloaded) == serialize_run_config_string(resolved));

  // the snapshot reloads with identical priorities
  std::ifstream snap_in(result.out_dir / kSnapshotFile);
  ReplayBuffer reloaded_buffer = ReplayBuffer::load_snapshot(snap_in);
  CHECK(reloaded_buffer.size() > 0);
}

TEST_CASE("run experiment: identical config and seed give byte-identical metrics") {
  TempDir tmp("determinism");
  RunConfig a = tiny_config(tmp.sub("a"));
  RunConfig b = tiny_config(tmp.sub("b"));
  RunResult ra = run_experiment(a);
  RunResult rb = run_experiment(b);
  std::string bytes_a = read_file(ra.out_dir / kMetricsFile);
  std::string bytes_b = read_file(rb.out_dir / kMetricsFile);
  REQUIRE_FALSE(bytes_a.empty());
  CHECK(bytes_a == bytes_b);

  RunConfig c = tiny_config(tmp.sub("c"));
  c.seed = 6;
  CHECK(read_file(run_experiment(c).out_dir / kMetricsFile) != bytes_a);
}

TEST_CASE("run experiment: ablation mode lands in the resolved config echo") {
  TempDir tmp("ablation_echo");
  RunConfig cfg = tiny_config(tmp.sub("run"));
  cfg.loop.ablation = AblationMode::no_weighting;
  RunResult result = run_experiment(cfg);
  std::string echo = read_file(result.out_dir / kResolvedConfigFile);
  CHECK(echo.find("ablation = no_weighting") != std::string::npos);
}

TEST_CASE("output root: relative paths move under COSE_LOOP_OUT") {
  TempDir tmp("envroot");
  ::setenv(kOutRootEnvVar, tmp.path.c_str(), 1);
  fs::path resolved = resolve_out_dir("some/run");
  ::unsetenv(kOutRootEnvVar);
  CHECK(resolved == tmp.path / "some/run");
  CHECK(resolve_out_dir("/abs/run") == fs::path("/abs/run"));
}

TEST_CASE("ablate: one table row per variant with medians across seeds") {
  TempDir tmp("ablate");
  RunConfig cfg = tiny_config(tmp.sub("ablate"));
  cfg.loop.total_steps = 2;
  ComparisonTable table = run_ablation(cfg, {1, 2});
  REQUIRE(table.rows.size() == 4);
  CHECK(table.rows[0].label == "full");
  CHECK(table.rows[1].label == "no_weighting");
  CHECK(table.rows[2].label == "no_priority");
  CHECK(table.rows[3].label == "one_minus_p");
  for (const TableRow& row : table.rows) {
    CHECK(row.finals.size() == 2);
    REQUIRE(row.median_final.has_value());
    CHECK(*row.median_final == Approx(0.5 * (row.finals[0] + row.finals[1])));
  }
  CHECK_THROWS_AS(run_ablation(cfg, {1}), InvalidInputError);

  // identical seeds and variants reproduce the same table
  ComparisonTable again = run_ablation(cfg, {1, 2});
  std::ostringstream t1, t2;
  table.write_tsv(t1);
  again.write_tsv(t2);
  CHECK(t1.str() == t2.str());
}

TEST_CASE("sweep: batch-size and signal-kind axes") {
  TempDir tmp("sweep");
  RunConfig cfg = tiny_config(tmp.sub("sweep"));
  cfg.loop.total_steps = 2;

  ComparisonTable batches = run_sweep(cfg, SweepAxis::batch_size, {"4", "8", "16"}, {1});
  REQUIRE(batches.rows.size() == 3);
  for (const TableRow& row : batches.rows) CHECK(row.finals.size() == 1);

  ComparisonTable signals = run_sweep(
      cfg, SweepAxis::signal_kind,
      {"normalized_entropy", "margin", "max_prob", "neg_entropy", "self_certainty"}, {1});
  CHECK(signals.rows.size() == 5);

  ComparisonTable single = run_sweep(cfg, SweepAxis::batch_size, {"8"}, {1});
  CHECK(single.rows.size() == 1);

  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::signal_kind, {"bogus"}, {1}), InvalidInputError);
  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::batch_size, {}, {1}), InvalidInputError);
  CHECK_THROWS_AS(sweep_axis_from_name("nonsense"), InvalidInputError);
}

TEST_CASE("plot: curves plus a tabular export with one row per record") {
  TempDir tmp("plot");
  RunConfig cfg = tiny_config(tmp.sub("run_a"));
  RunResult ra = run_experiment(cfg);
  cfg.out_dir = tmp.sub("run_b");
  cfg.seed = 9;
  RunResult rb = run_experiment(cfg);

  std::vector<PlotSeries> series;
  for (const RunResult* r : {&ra, &rb}) {
    std::ifstream in(r->out_dir / kMetricsFile);
    PlotSeries s;
    s.label = r->out_dir.filename().string();
    s.reports = read_metrics(in).reports;
    series.push_back(std::move(s));
  }

  std::ostringstream svg;
  write_plot_svg(series, svg);
  CHECK(svg.str().find("<svg") != std::string::npos);
  CHECK(svg.str().find("polyline") != std::string::npos);
  CHECK(svg.str().find("stroke-dasharray") != std::string::npos);  // step-0 reference
  CHECK(svg.str().find("run_a") != std::string::npos);
  CHECK(svg.str().find("run_b") != std::string::npos);

  std::ostringstream table;
  write_plot_table(series, table);
  size_t rows = 0;
  std::istringstream lines(table.str());
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == ra.reports.size() + rb.reports.size());

  CHECK_THROWS_AS(write_plot_svg({}, svg), InvalidInputError);
}

TEST_CASE("trace: per-sample weights for one step of a persisted run") {
  TempDir tmp("trace");
  RunConfig cfg = tiny_config(tmp.sub("traced"));
  cfg.loop.trace_samples = true;
  RunResult result = run_experiment(cfg);
  REQUIRE(fs::exists(result.out_dir / kTraceFile));

  std::vector<TraceRecord> step0 = load_trace(result.out_dir, 0);
  CHECK_FALSE(step0.empty());
  for (const TraceRecord& t : step0) {
    CHECK((t.role == "solver" || t.role == "proposer"));
    CHECK(t.weight >= 0.1);
    CHECK(t.weight <= 1.0);
  }

  CHECK_THROWS_AS(load_trace(result.out_dir, 99), OutOfRangeError);
  CHECK_THROWS_AS(load_trace(tmp.sub("nonexistent"), 0), InvalidInputError);

  // a run without tracing explains the problem
  RunConfig untraced = tiny_config(tmp.sub("untraced"));
  RunResult ru = run_experiment(untraced);
  try {
    load_trace(ru.out_dir, 0);
    FAIL("expected InvalidInputError");
  } catch (const InvalidInputError& e) {
    CHECK(std::string(e.what()).find("trace_samples") != std::string::npos);
  }
}

TEST_CASE("trace: no_weighting runs log unit weights") {
  TempDir tmp("trace_now");
  RunConfig cfg = tiny_config(tmp.sub("nw"));
  cfg.loop.trace_samples = true;
  cfg.loop.ablation = AblationMode::no_weighting;
  RunResult result = run_experiment(cfg);
  for (int step = 0; step < cfg.loop.total_steps; ++step) {
    for (const TraceRecord& t : load_trace(result.out_dir, step)) {
      CHECK(t.weight == 1.0);
    }
  }
}
