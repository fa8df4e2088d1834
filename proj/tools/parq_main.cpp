// Command-line harness: assembles a problem + optimizer + schedules from a
// JSON config, runs seeded experiments to CSV, checks convergence bounds, and
// produces side-by-side method comparisons.
//
// Exit codes: 0 success, 1 config or runtime error, 2 bound-violation flag.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "parq/harness.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    const std::size_t next = csv.find(',', pos);
    const std::string tok = csv.substr(pos, next == std::string::npos ? next : next - pos);
    if (tok.empty()) throw parq::ConfigError("--seeds: empty entry in '" + csv + "'");
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(tok, &used);
    if (used != tok.size()) throw parq::ConfigError("--seeds: bad entry '" + tok + "'");
    seeds.push_back(v);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return seeds;
}

int cmd_run(const std::string& config_path, const std::string& seeds_csv,
            const std::string& out_dir) {
  parq::ExperimentConfig cfg = parq::ExperimentConfig::load(config_path);
  if (!seeds_csv.empty()) cfg.seeds = parse_seed_list(seeds_csv);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (cfg.out_dir.empty()) cfg.out_dir = "out";

  const parq::RunResult result = parq::run(cfg);
  for (const auto& path : result.trace_files) std::cout << "wrote " << path.string() << "\n";
  std::cout << "wrote " << result.summary_file.string() << "\n";
  if (result.any_aborted) {
    std::cerr << "error: at least one seed aborted on a non-finite loss "
                 "(see the trailing diagnostic record in its trace)\n";
    return 1;
  }
  return 0;
}

int cmd_check_bound(const std::string& trace_path, double G, double R) {
  namespace fs = std::filesystem;
  parq::BoundReport report;

  // Accept either a summary CSV (seed-averaged gap) or a single-seed trace.
  std::ifstream probe(trace_path);
  if (!probe) throw std::runtime_error("cannot open " + trace_path);
  std::string header;
  std::getline(probe, header);
  probe.close();
  if (header == parq::kSummaryHeader) {
    const auto rows = parq::read_summary_csv(fs::path(trace_path));
    report = parq::check_bound(rows, G, R);
  } else if (header == parq::kTraceHeader) {
    const auto trace = parq::read_trace_csv(fs::path(trace_path));
    std::vector<long> steps;
    std::vector<double> gaps;
    for (const auto& r : trace.records) {
      steps.push_back(r.step);
      gaps.push_back(r.objective_gap);
    }
    report = parq::check_bound_series(steps, gaps, {}, 1, G, R);
  } else {
    throw std::runtime_error("unrecognized csv header in " + trace_path);
  }

  std::printf("# seeds: %d\n", report.n_seeds);
  std::printf("%10s %16s %16s %16s %16s %s\n", "step", "mean_gap", "stderr", "bound",
              "margin", "flag");
  for (const auto& row : report.rows)
    std::printf("%10ld %16.8g %16.8g %16.8g %16.8g %s\n", row.step, row.mean_gap,
                row.stderr_, row.bound, row.margin, row.flagged ? "VIOLATION" : "ok");
  std::printf("violations: %ld (worst margin %.8g at step %ld)\n", report.flag_count,
              report.worst_margin, report.worst_step);
  return report.flag_count > 0 ? 2 : 0;
}

int cmd_compare(const std::vector<std::string>& config_paths, const std::string& out_csv) {
  std::vector<parq::ExperimentConfig> configs;
  configs.reserve(config_paths.size());
  for (const auto& p : config_paths) configs.push_back(parq::ExperimentConfig::load(p));
  const std::filesystem::path out(out_csv);
  const parq::CompareResult result = parq::compare_methods(configs, &out);
  std::cout << "wrote " << out_csv << "\n";
  for (const auto& trend : result.trends) {
    if (!trend.valid) continue;
    std::printf("%s: grid-magnitude mean first-difference by thirds: %+.6g %+.6g %+.6g\n",
                trend.name.c_str(), trend.first_third, trend.middle_third,
                trend.last_third);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale quantization-aware training laboratory"};
  app.require_subcommand(1);

  std::string config_path, seeds_csv, out_dir;
  auto* run_cmd = app.add_subcommand("run", "run a seeded experiment from a JSON config");
  run_cmd->add_option("--config", config_path, "config file")->required();
  run_cmd->add_option("--seeds", seeds_csv, "comma-separated seed override");
  run_cmd->add_option("--out", out_dir, "output directory override");

  std::string trace_path;
  double G = 0.0, R = 0.0;
  auto* check_cmd =
      app.add_subcommand("check-bound", "compare a trace's objective gap to the G R (2 + 1.5 ln t)/sqrt(t) envelope");
  check_cmd->add_option("--trace", trace_path, "trace or summary csv")->required();
  check_cmd->add_option("--G", G, "Lipschitz constant")->required();
  check_cmd->add_option("--R", R, "initial distance to the optimum")->required();

  std::vector<std::string> compare_paths;
  std::string compare_out;
  auto* compare_cmd =
      app.add_subcommand("compare", "run several configs on one problem and merge their curves");
  compare_cmd->add_option("--configs", compare_paths, "config files")->required()->expected(-1);
  compare_cmd->add_option("--out", compare_out, "combined csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, seeds_csv, out_dir);
    if (check_cmd->parsed()) return cmd_check_bound(trace_path, G, R);
    if (compare_cmd->parsed()) return cmd_compare(compare_paths, compare_out);
  } catch (const parq::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
