// miql command line: run, sweep, verify, plot.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "miql/config.hpp"
#include "miql/harness.hpp"
#include "miql/plot.hpp"
#include "miql/verification.hpp"

namespace fs = std::filesystem;
using namespace miql;

namespace {

int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void print_best(const std::vector<ConfigAggregate>& best) {
  std::cout << std::left << std::setw(52) << "group" << std::right << std::setw(12) << "reward" << std::setw(10) << "se"
            << std::setw(10) << "river" << std::setw(10) << "path" << '\n';
  for (const auto& b : best) {
    std::cout << std::left << std::setw(52) << b.group << std::right << std::fixed << std::setprecision(2) << std::setw(12)
              << b.mean_reward << std::setw(10) << b.se_reward << std::setw(10) << b.mean_river << std::setw(10) << b.mean_path
              << '\n';
  }
  std::cout.unsetf(std::ios::floatfield);
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out, int workers) {
  RunConfig cfg = load_run_config(path);
  if (seed) cfg.seeds = {*seed};
  cfg.trials = static_cast<int>(cfg.trial_seeds().size());
  const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
  fs::create_directories(dir);
  std::vector<TrialResult> results;
  if (cfg.trace) {
    for (const auto s : cfg.trial_seeds()) {
      std::ofstream trace(dir / ("trace_" + std::to_string(s) + ".csv"));
      if (!trace) throw std::runtime_error((dir / ("trace_" + std::to_string(s) + ".csv")).string() + ": cannot open");
      write_trace_header(trace);
      TrialOptions opt;
      opt.trace = &trace;
      results.push_back(run_trial(cfg, s, opt));
    }
  } else {
    results = run_sweep({cfg}, workers);
  }
  const std::vector<RunConfig> grid{cfg};
  write_sweep_outputs(dir, grid, {to_json(cfg)}, results);
  int failed = 0;
  for (const auto& r : results) {
    if (!r.ok()) {
      ++failed;
      std::cerr << "seed " << r.seed << ": " << r.error << '\n';
      continue;
    }
    std::cout << r.label << " seed " << r.seed << ": episodes " << r.summary.episodes_completed << ", mean reward "
              << format_double(r.summary.mean_reward) << ", river " << format_double(r.summary.mean_river_steps) << ", path "
              << format_double(r.summary.mean_path_length) << " (" << std::fixed << std::setprecision(2) << r.wall_seconds
              << " s)\n";
    std::cout.unsetf(std::ios::floatfield);
    if (r.fallbacks) std::cout << "  note: " << r.fallbacks << " uniform fallbacks for missing memory\n";
  }
  std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
  return failed ? 1 : 0;
}

int cmd_sweep(const std::string& target, const std::string& out, int workers) {
  std::vector<RunConfig> grid;
  std::vector<json> raw;
  std::string curve;
  fs::path dir = out.empty() ? fs::path("sweep_out") : fs::path(out);
  if (fs::is_directory(target)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(target))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError(target + ": no .json configs found");
    for (const auto& f : files) {
      grid.push_back(load_run_config(f.string()));
      raw.push_back(read_json_file(f.string()));
    }
  } else {
    const json j = read_json_file(target);
    GridSpec spec;
    try {
      spec = parse_grid_spec(j);
    } catch (const ConfigError& e) {
      throw ConfigError(target + ": " + e.what());
    }
    auto expanded = expand_grid(spec);
    grid = std::move(expanded.configs);
    raw = std::move(expanded.raw);
    curve = spec.curve_x;
    if (expanded.duplicates) std::cout << "skipped " << expanded.duplicates << " duplicate combinations\n";
  }
  long jobs = 0;
  for (const auto& c : grid) jobs += static_cast<long>(c.trial_seeds().size());
  std::cout << grid.size() << " configurations, " << jobs << " trials, " << workers << " workers\n";
  const auto results = run_sweep(grid, workers);
  const auto best = write_sweep_outputs(dir, grid, raw, results, curve);
  print_best(best);
  long failed = 0;
  for (const auto& r : results) {
    if (r.ok()) continue;
    ++failed;
    std::cerr << "trial " << r.config_hash << "/" << r.seed << " failed: " << r.error << '\n';
  }
  std::cout << "wrote " << dir.string() << '\n';
  return failed ? 1 : 0;
}

int cmd_verify(const std::string& theorem, std::uint64_t seed, const std::string& out) {
  std::vector<verify::CheckResult> results;
  bool ok = true;
  for (const auto& check : verify::checks_for(theorem, seed)) {
    auto r = check();
    std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << std::left << std::setw(18) << r.id << ' ' << r.name << " ("
              << std::fixed << std::setprecision(2) << r.seconds << " s)\n       " << r.detail << '\n';
    std::cout.unsetf(std::ios::floatfield);
    ok = ok && r.passed;
    results.push_back(std::move(r));
  }
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw std::runtime_error(out + ": cannot open for writing");
    verify::write_report_csv(os, results);
  }
  return ok ? 0 : 1;
}

int cmd_plot(const std::string& csv, bool log_scale, const std::string& metric, const std::string& out, const std::string& title) {
  std::ifstream is(csv, std::ios::binary);
  if (!is) throw std::runtime_error(csv + ": cannot open");
  std::string header;
  std::getline(is, header);
  is.clear();
  is.seekg(0);
  std::vector<Series> series;
  PlotOptions opt;
  opt.title = title;
  opt.log_scale = log_scale;
  if (header == kCurveHeader) {
    series = series_from_curve(is);
    opt.x_label = "x";
    opt.y_label = "mean reward per episode";
  } else {
    const MetricColumn col = metric == "river" ? MetricColumn::RiverSteps : metric == "path" ? MetricColumn::PathLength : MetricColumn::Reward;
    series = series_from_metrics(read_metrics_csv(is, csv), col);
    opt.x_label = "t";
    opt.y_label = to_string(col);
  }
  const fs::path target = out.empty() ? fs::path(csv).replace_extension(".svg") : fs::path(out);
  std::ostringstream svg;
  emit_plot(series, svg, opt);
  std::ofstream os(target, std::ios::binary);
  if (!os) throw std::runtime_error(target.string() + ": cannot open for writing");
  os << svg.str();
  std::cout << "wrote " << target.string() << " (" << series.size() << " series)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-imputation Q-learning under state missingness"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = default_workers();
  app.add_option("--seed", seed, "Seed override (run: single trial seed; verify: oracle seed)");
  app.add_option("--out", out, "Output directory (run, sweep) or file (verify report, plot)");
  app.add_option("--workers", workers, "Worker threads for trials")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run every seed of one config");
  std::string run_path;
  run->add_option("config", run_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Run a directory of configs or a grid spec");
  std::string sweep_target;
  sweep->add_option("target", sweep_target, "Config directory or grid spec file")->required()->check(CLI::ExistingPath);

  auto* ver = app.add_subcommand("verify", "Check the theory oracles");
  std::string theorem = "all";
  ver->add_option("--theorem", theorem, "Which oracle group to check")->check(CLI::IsMember({"all", "a1", "a2", "a3"}));

  auto* plot = app.add_subcommand("plot", "Render a metrics or curve CSV as SVG");
  std::string plot_csv, metric = "reward", title;
  bool log_scale = false;
  plot->add_option("csv", plot_csv, "metrics.csv, best_metrics.csv or curve.csv")->required()->check(CLI::ExistingFile);
  plot->add_flag("--log", log_scale, "Log-scaled y axis");
  plot->add_option("--metric", metric, "reward, river or path")->check(CLI::IsMember({"reward", "river", "path"}));
  plot->add_option("--title", title, "Chart title");

  for (auto* sub : {run, sweep, ver, plot}) {
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--out", out, "Output location");
    sub->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*run) return cmd_run(run_path, seed, out, workers);
    if (*sweep) return cmd_sweep(sweep_target, out, workers);
    if (*ver) return cmd_verify(theorem, seed.value_or(verify::kDefaultSeed), out);
    if (*plot) return cmd_plot(plot_csv, log_scale, metric, out, title);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
