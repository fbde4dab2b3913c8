// cose_loop: experiment commands for the confidence-orchestrated
// self-evolution loop.
//
//   cose_loop run    --config desk.ini --seed 7 --out runs/a
//   cose_loop ablate --config desk.ini --seeds 1,2,3
//   cose_loop sweep  --config desk.ini --axis signal_kind --values margin,max_prob
//   cose_loop plot   runs/a/metrics.jsonl runs/b/metrics.jsonl --out curves
//   cose_loop trace  runs/a --step 12
//
// Relative --out paths are rooted under $COSE_LOOP_OUT when it is set.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cose/config.hpp"
#include "cose/experiment.hpp"

namespace {

cose::RunConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return cose::desk_profile();
  std::ifstream in(config_path);
  if (!in) throw cose::ConfigError("cannot open config file: " + config_path);
  return cose::parse_run_config(in, cose::desk_profile());
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<uint64_t> seeds;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    std::string item = csv.substr(pos, comma - pos);
    if (!item.empty()) seeds.push_back(std::stoull(item));
    pos = comma + 1;
  }
  if (seeds.empty()) throw cose::ConfigError("empty seed list");
  return seeds;
}

std::vector<std::string> parse_value_list(const std::string& csv) {
  std::vector<std::string> values;
  size_t pos = 0;
  while (pos <= csv.size()) {
    size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    std::string item = csv.substr(pos, comma - pos);
    if (!item.empty()) values.push_back(item);
    pos = comma + 1;
  }
  return values;
}

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> steps;
  std::string out_dir;
  std::string ablation;
  bool trace_samples = false;
};

void apply_overrides(cose::RunConfig& cfg, const CommonFlags& flags) {
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.steps) cfg.loop.total_steps = *flags.steps;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.ablation.empty()) cfg.loop.ablation = cose::ablation_mode_from_name(flags.ablation);
  if (flags.trace_samples) cfg.loop.trace_samples = true;
}

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "configuration file");
  cmd->add_option("--seed", flags.seed, "run seed override");
  cmd->add_option("--steps", flags.steps, "total_steps override");
  cmd->add_option("--out", flags.out_dir, "output directory override");
  cmd->add_option("--ablation", flags.ablation,
                  "ablation mode: full | no_weighting | no_priority | one_minus_p");
  cmd->add_flag("--trace-samples", flags.trace_samples, "persist per-sample weight traces");
}

int cmd_run(const CommonFlags& flags) {
  cose::RunConfig cfg = load_config(flags.config_path);
  apply_overrides(cfg, flags);
  cose::RunResult result = cose::run_experiment(cfg);
  std::cout << "run finished: " << result.reports.size() << " steps, final probe accuracy "
            << std::setprecision(6) << result.final_probe_accuracy << "\n";
  std::cout << "artifacts in " << result.out_dir.string() << "\n";
  return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& seeds_csv) {
  cose::RunConfig cfg = load_config(flags.config_path);
  apply_overrides(cfg, flags);
  cose::ComparisonTable table = cose::run_ablation(cfg, parse_seed_list(seeds_csv));
  std::cout << table.formatted();
  std::filesystem::path out = cose::resolve_out_dir(cfg.out_dir);
  std::filesystem::create_directories(out);
  std::ofstream tsv(out / "ablation.tsv");
  table.write_tsv(tsv);
  std::cout << "table written to " << (out / "ablation.tsv").string() << "\n";
  return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis, const std::string& values_csv,
              const std::string& seeds_csv) {
  cose::RunConfig cfg = load_config(flags.config_path);
  apply_overrides(cfg, flags);
  cose::ComparisonTable table =
      cose::run_sweep(cfg, cose::sweep_axis_from_name(axis), parse_value_list(values_csv),
                      parse_seed_list(seeds_csv));
  std::cout << table.formatted();
  std::filesystem::path out = cose::resolve_out_dir(cfg.out_dir);
  std::filesystem::create_directories(out);
  std::ofstream tsv(out / ("sweep_" + axis + ".tsv"));
  table.write_tsv(tsv);
  std::cout << "table written to " << (out / ("sweep_" + axis + ".tsv")).string() << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& metrics_paths, const std::string& out_dir) {
  std::vector<cose::PlotSeries> series;
  for (const std::string& path : metrics_paths) {
    std::ifstream in(path);
    if (!in) throw cose::InvalidInputError("cannot open metrics file: " + path);
    cose::ParsedMetrics parsed = cose::read_metrics(in, &std::cerr);
    cose::PlotSeries s;
    s.label = std::filesystem::path(path).parent_path().filename().string();
    if (s.label.empty()) s.label = std::filesystem::path(path).stem().string();
    s.reports = std::move(parsed.reports);
    series.push_back(std::move(s));
  }
  std::filesystem::path out = cose::resolve_out_dir(out_dir.empty() ? "plot" : out_dir);
  std::filesystem::create_directories(out);
  {
    std::ofstream svg(out / "curves.svg");
    cose::write_plot_svg(series, svg);
  }
  {
    std::ofstream tsv(out / "curves.tsv");
    cose::write_plot_table(series, tsv);
  }
  std::cout << "wrote " << (out / "curves.svg").string() << " and "
            << (out / "curves.tsv").string() << "\n";
  return 0;
}

int cmd_trace(const std::string& run_dir, int step) {
  std::vector<cose::TraceRecord> records = cose::load_trace(run_dir, step);
  std::cout << "step " << step << ": " << records.size() << " samples\n";
  std::cout << std::left << std::setw(10) << "role" << std::setw(10) << "v" << std::setw(10)
            << "c_V" << std::setw(10) << "c_J" << std::setw(10) << "w" << std::setw(10)
            << "reward" << "correct\n";
  for (const cose::TraceRecord& t : records) {
    std::cout << std::left << std::setw(10) << t.role << std::setw(10) << t.v << std::setw(10)
              << t.c_v << std::setw(10) << t.c_j << std::setw(10) << t.weight << std::setw(10)
              << t.reward << (t.latent_correct ? "yes" : "no") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confidence-orchestrated self-evolution loop"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "execute one configured run");
  add_common_flags(run, run_flags);

  CommonFlags ablate_flags;
  std::string ablate_seeds = "1,2";
  CLI::App* ablate = app.add_subcommand("ablate", "compare ablation variants across seeds");
  add_common_flags(ablate, ablate_flags);
  ablate->add_option("--seeds", ablate_seeds, "comma-separated seed list (>= 2)");

  CommonFlags sweep_flags;
  std::string sweep_axis = "batch_size";
  std::string sweep_values;
  std::string sweep_seeds = "1";
  CLI::App* sweep = app.add_subcommand("sweep", "sweep batch size or confidence signal");
  add_common_flags(sweep, sweep_flags);
  sweep->add_option("--axis", sweep_axis, "batch_size | signal_kind");
  sweep->add_option("--values", sweep_values, "comma-separated axis values")->required();
  sweep->add_option("--seeds", sweep_seeds, "comma-separated seed list");

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  CLI::App* plot = app.add_subcommand("plot", "probe-accuracy curves from metrics streams");
  plot->add_option("metrics", plot_inputs, "metrics.jsonl files")->required();
  plot->add_option("--out", plot_out, "output directory");

  std::string trace_dir;
  int trace_step = 0;
  CLI::App* trace = app.add_subcommand("trace", "per-sample weights for one step of a run");
  trace->add_option("run_dir", trace_dir, "run directory")->required();
  trace->add_option("--step", trace_step, "step index")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, ablate_seeds);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, sweep_axis, sweep_values, sweep_seeds);
    if (plot->parsed()) return cmd_plot(plot_inputs, plot_out);
    if (trace->parsed()) return cmd_trace(trace_dir, trace_step);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
