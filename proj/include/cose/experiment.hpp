#pragma once

/**
 * Experiment drivers behind the command-line interface: executing a
 * configured run with its artifact files, the ablation and sweep tables,
 * curve plotting, and per-sample weight traces.
 *
 * A run directory always ends up with either the four run artifacts
 *   metrics.jsonl, buffer.snapshot, policy.txt, config.resolved.ini
 * or a fault_report.txt describing the numerical fault that stopped it.
 */

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cose/config.hpp"
#include "cose/errors.hpp"
#include "cose/metrics.hpp"
#include "cose/orchestrator.hpp"

#include "json.hpp"

namespace cose {

inline const char* kMetricsFile = "metrics.jsonl";
inline const char* kSnapshotFile = "buffer.snapshot";
inline const char* kPolicyFile = "policy.txt";
inline const char* kResolvedConfigFile = "config.resolved.ini";
inline const char* kTraceFile = "trace.jsonl";
inline const char* kProbeFile = "probe_set.tsv";
inline const char* kFaultFile = "fault_report.txt";
inline const char* kOutRootEnvVar = "COSE_LOOP_OUT";

// Relative output paths live under $COSE_LOOP_OUT when it is set.
inline std::filesystem::path resolve_out_dir(const std::string& out_dir) {
  std::filesystem::path p(out_dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutRootEnvVar)) {
    return std::filesystem::path(root) / p;
  }
  return p;
}

namespace detail {

inline void write_policy_section(std::ostream& out, const std::string& name,
                                 const PolicyParams& params) {
  out << name << ' ' << params.contexts << ' ' << params.actions << '\n';
  for (int c = 0; c < params.contexts; ++c) {
    for (int a = 0; a < params.actions; ++a) {
      if (a) out << '\t';
      out << ReplayBuffer::format_double(params.at(c, a));
    }
    out << '\n';
  }
}

inline std::string trace_line(const SampleTrace& t) {
  std::string out = "{";
  out += "\"step\":" + std::to_string(t.step);
  out += std::string(",\"role\":\"") + role_name(t.role) + "\"";
  out += ",\"v\":" + six_digits(t.v);
  out += ",\"c_v\":" + six_digits(t.c_v);
  out += ",\"c_j\":" + six_digits(t.c_j);
  out += ",\"w\":" + six_digits(t.weight);
  out += ",\"reward\":" + six_digits(t.reward);
  out += std::string(",\"latent_correct\":") + (t.latent_correct ? "true" : "false");
  out += "}";
  return out;
}

}  // namespace detail

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<IterationReport> reports;
  double final_probe_accuracy = 0.0;
  bool faulted = false;
  std::string fault_message;
};

// Executes one configured run, streaming metrics line by line. A numerical
// fault terminates the run but still persists the final state and a fault
// report.
inline RunResult run_experiment(const RunConfig& config) {
  RunResult result;
  result.out_dir = resolve_out_dir(config.out_dir);
  std::filesystem::create_directories(result.out_dir);

  RunConfig resolved = config;
  resolved.world.seed = config.seed;
  {
    std::ofstream cfg_out(result.out_dir / kResolvedConfigFile);
    serialize_run_config(resolved, cfg_out);
  }

  Orchestrator orchestrator(resolved.world, resolved.loop, resolved.optimizer, resolved.buffer,
                            resolved.signal_kind, resolved.seed, resolved.score_span_only);
  {
    std::ofstream probe_out(result.out_dir / kProbeFile);
    SyntheticWorld::export_probe_set(orchestrator.probe_set(), probe_out);
  }

  std::ofstream metrics_out(result.out_dir / kMetricsFile);
  try {
    result.reports = orchestrator.run([&](const IterationReport& report) {
      metrics_out << serialize_metrics_line(report) << '\n';
      metrics_out.flush();
    });
  } catch (const NumericalFaultError& e) {
    result.faulted = true;
    result.fault_message = e.what();
    std::ofstream fault_out(result.out_dir / kFaultFile);
    fault_out << "numerical fault at step " << orchestrator.step_index() << ": " << e.what()
              << "\n";
  }

  {
    std::ofstream snapshot_out(result.out_dir / kSnapshotFile);
    orchestrator.buffer().save_snapshot(snapshot_out);
  }
  {
    std::ofstream policy_out(result.out_dir / kPolicyFile);
    detail::write_policy_section(policy_out, "proposer", orchestrator.proposer_params());
    detail::write_policy_section(policy_out, "solver", orchestrator.solver_params());
  }
  if (resolved.loop.trace_samples) {
    std::ofstream trace_out(result.out_dir / kTraceFile);
    for (const SampleTrace& t : orchestrator.traces()) {
      trace_out << detail::trace_line(t) << '\n';
    }
  }
  result.final_probe_accuracy = orchestrator.probe_accuracy();
  if (result.faulted) {
    throw NumericalFaultError("run terminated: " + result.fault_message + " (artifacts in " +
                              result.out_dir.string() + ")");
  }
  return result;
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw InvalidInputError("median of empty set");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct TableRow {
  std::string label;
  std::vector<double> finals;  // one per seed, successful runs only
  size_t failed = 0;
  std::optional<double> median_final;
};

struct ComparisonTable {
  std::string axis;
  std::vector<TableRow> rows;

  std::string formatted() const {
    std::ostringstream out;
    out << std::left << std::setw(22) << axis << "median final accuracy   runs\n";
    for (const TableRow& row : rows) {
      out << std::left << std::setw(22) << row.label;
      if (row.median_final) {
        out << std::setw(25) << std::setprecision(6) << *row.median_final;
      } else {
        out << std::setw(25) << "failed";
      }
      out << row.finals.size();
      if (row.failed) out << " (" << row.failed << " failed)";
      out << "\n";
    }
    return out.str();
  }

  void write_tsv(std::ostream& out) const {
    out << axis << "\tmedian_final_accuracy\truns\tfailed\n";
    for (const TableRow& row : rows) {
      out << row.label << '\t'
          << (row.median_final ? ReplayBuffer::format_double(*row.median_final)
                               : std::string("failed"))
          << '\t' << row.finals.size() << '\t' << row.failed << '\n';
    }
  }
};

namespace detail {

inline TableRow run_variant(const RunConfig& base, const std::string& label,
                            const std::vector<uint64_t>& seeds) {
  TableRow row;
  row.label = label;
  for (uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.out_dir = base.out_dir + "/" + label + "_seed" + std::to_string(seed);
    try {
      row.finals.push_back(run_experiment(cfg).final_probe_accuracy);
    } catch (const std::exception&) {
      ++row.failed;
    }
  }
  if (!row.finals.empty()) row.median_final = median(row.finals);
  return row;
}

}  // namespace detail

// {full, no_weighting, no_priority, one_minus_p} x seeds
inline ComparisonTable run_ablation(const RunConfig& base, const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 2) throw InvalidInputError("ablate needs at least 2 seeds");
  ComparisonTable table;
  table.axis = "variant";
  for (AblationMode mode : {AblationMode::full, AblationMode::no_weighting,
                            AblationMode::no_priority, AblationMode::one_minus_p}) {
    RunConfig cfg = base;
    cfg.loop.ablation = mode;
    table.rows.push_back(detail::run_variant(cfg, ablation_mode_name(mode), seeds));
  }
  return table;
}

enum class SweepAxis { batch_size, signal_kind };

inline SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "batch_size") return SweepAxis::batch_size;
  if (name == "signal_kind") return SweepAxis::signal_kind;
  throw InvalidInputError("unknown sweep axis: " + name + " (batch_size | signal_kind)");
}

inline ComparisonTable run_sweep(const RunConfig& base, SweepAxis axis,
                                 const std::vector<std::string>& values,
                                 const std::vector<uint64_t>& seeds) {
  if (values.empty()) throw InvalidInputError("sweep needs at least one value");
  if (seeds.empty()) throw InvalidInputError("sweep needs at least one seed");
  ComparisonTable table;
  table.axis = axis == SweepAxis::batch_size ? "batch_size" : "signal_kind";
  for (const std::string& value : values) {
    RunConfig cfg = base;
    if (axis == SweepAxis::batch_size) {
      int batch = detail::parse_number<int>("sweep", "batch_size", value);
      if (batch < 1) throw InvalidInputError("sweep: batch_size must be >= 1");
      cfg.loop.solver_batch_size = batch;
    } else {
      cfg.signal_kind = signal_kind_from_name(value);  // validates the value
    }
    table.rows.push_back(detail::run_variant(cfg, value, seeds));
  }
  return table;
}

// --- plotting ---------------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<IterationReport> reports;
};

// Probe-accuracy-vs-step curves with a dashed reference at each series'
// step-0 value, plus a tab-separated export of every plotted point.
inline void write_plot_svg(const std::vector<PlotSeries>& series, std::ostream& out) {
  if (series.empty()) throw InvalidInputError("plot: no series");
  const double width = 860, height = 520;
  const double ml = 70, mr = 180, mt = 30, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;

  int max_step = 1;
  for (const PlotSeries& s : series) {
    for (const IterationReport& r : s.reports) max_step = std::max(max_step, r.step);
  }
  auto x_of = [&](double step) { return ml + pw * (step / std::max(1, max_step)); };
  auto y_of = [&](double acc) { return mt + ph * (1.0 - acc); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes and gridlines
  out << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (int i = 0; i <= 5; ++i) {
    double acc = i / 5.0;
    out << "<line x1=\"" << ml << "\" y1=\"" << y_of(acc) << "\" x2=\"" << ml + pw << "\" y2=\""
        << y_of(acc) << "\"/>\n";
  }
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">\n";
  for (int i = 0; i <= 5; ++i) {
    double acc = i / 5.0;
    out << "<text x=\"" << ml - 10 << "\" y=\"" << y_of(acc) + 4
        << "\" text-anchor=\"end\">" << detail::format_double(acc) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    int step = max_step * i / 5;
    out << "<text x=\"" << x_of(step) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\">" << step << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">step</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << mt + ph / 2
      << ")\">probe accuracy</text>\n";
  out << "</g>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % 8];
    const auto& reports = series[i].reports;
    // dashed reference at the series' step-0 accuracy
    double baseline = reports.front().probe_accuracy;
    out << "<line x1=\"" << ml << "\" y1=\"" << y_of(baseline) << "\" x2=\"" << ml + pw
        << "\" y2=\"" << y_of(baseline) << "\" stroke=\"" << color
        << "\" stroke-width=\"1\" stroke-dasharray=\"6,4\" opacity=\"0.6\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (const IterationReport& r : reports) {
      out << x_of(r.step) << ',' << y_of(r.probe_accuracy) << ' ';
    }
    out << "\"/>\n";
    double ly = mt + 16 + 18.0 * static_cast<double>(i);
    out << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + pw + 38
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << ml + pw + 44 << "\" y=\"" << ly
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[i].label << "</text>\n";
  }
  out << "</svg>\n";
}

inline void write_plot_table(const std::vector<PlotSeries>& series, std::ostream& out) {
  out << "series\tstep\tprobe_accuracy\n";
  for (const PlotSeries& s : series) {
    for (const IterationReport& r : s.reports) {
      out << s.label << '\t' << r.step << '\t' << detail::six_digits(r.probe_accuracy)
          << '\n';
    }
  }
}

// --- traces ----------------------------------------------------------------

struct TraceRecord {
  int step = 0;
  std::string role;
  double v = 0.0, c_v = 0.0, c_j = 0.0, weight = 0.0, reward = 0.0;
  bool latent_correct = false;
};

// Loads the requested step's per-sample traces from a finished run
// directory. Fails with an explanation when the run was executed without
// trace_samples, and with a range error when the step is beyond the run.
inline std::vector<TraceRecord> load_trace(const std::filesystem::path& run_dir, int step) {
  std::ifstream cfg_in(run_dir / kResolvedConfigFile);
  if (!cfg_in) {
    throw InvalidInputError("no " + std::string(kResolvedConfigFile) + " in " +
                            run_dir.string() + "; is this a run directory?");
  }
  RunConfig cfg = parse_run_config(cfg_in);
  if (!cfg.loop.trace_samples) {
    throw InvalidInputError(
        "this run was executed without sample tracing; rerun with [loop] trace_samples = true "
        "(flag --trace-samples)");
  }
  if (step < 0 || step >= cfg.loop.total_steps) {
    throw OutOfRangeError("step " + std::to_string(step) + " outside the run's range [0, " +
                          std::to_string(cfg.loop.total_steps) + ")");
  }
  std::ifstream trace_in(run_dir / kTraceFile);
  if (!trace_in) throw InvalidInputError("missing trace file " + std::string(kTraceFile));
  std::vector<TraceRecord> out;
  std::string line;
  while (std::getline(trace_in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    if (j.at("step").get<int>() != step) continue;
    TraceRecord t;
    t.step = step;
    t.role = j.at("role").get<std::string>();
    t.v = j.at("v").get<double>();
    t.c_v = j.at("c_v").get<double>();
    t.c_j = j.at("c_j").get<double>();
    t.weight = j.at("w").get<double>();
    t.reward = j.at("reward").get<double>();
    t.latent_correct = j.at("latent_correct").get<bool>();
    out.push_back(t);
  }
  return out;
}

}  // namespace cose
