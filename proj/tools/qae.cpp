// Command-line front end: run | sweep | verify | report.
//
// Exit codes: 0 success, 1 verification failure, 2 bad config or malformed
// input, 3 runtime error.

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "qae/config.hpp"
#include "qae/metrics.hpp"
#include "qae/presets.hpp"
#include "qae/sim.hpp"
#include "qae/svg.hpp"
#include "qae/verify.hpp"
#include "qae/version.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int run_single(const qae::TrainConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  qae::write_manifest((dir / "manifest.json").string(), cfg);
  qae::MetricsWriter writer((dir / "metrics.csv").string());
  const qae::RunResult result = qae::run_experiment(cfg, &writer);
  qae::write_policy_dump((dir / "policy_final.json").string(), result.state);
  return kExitOk;
}

int cmd_run(const std::optional<std::string>& config_path,
            const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
  qae::TrainConfig cfg;
  try {
    cfg = qae::load_config(config_path, seed);
  } catch (const qae::ConfigError& e) {
    std::cerr << "config error (" << e.field << "): " << e.what() << '\n';
    return kExitConfig;
  }
  fs::path dir;
  if (out) {
    dir = *out;
  } else {
    const char* env_out = std::getenv("QAE_OUT");
    dir = fs::path(env_out != nullptr ? env_out : "out") /
          ("run_seed" + std::to_string(cfg.seed));
  }
  try {
    run_single(cfg, dir);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cout << "run complete: " << dir.string() << " (" << cfg.num_steps << " steps)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepCell {
  double value = 0.0;
  std::uint64_t seed = 0;
  fs::path dir;
  bool failed = false;
  std::string error;
  double final_quartile_entropy = 0.0;
  double final_pass_at_1 = 0.0;
};

int cmd_sweep(const std::optional<std::string>& config_path, const std::string& axis,
              const std::vector<double>& values, const std::vector<std::uint64_t>& seeds,
              const std::optional<std::string>& out, int jobs) {
  if (axis != "K" && axis != "eps_high") {
    std::cerr << "config error (axis): axis must be K or eps_high\n";
    return kExitConfig;
  }
  if (values.empty() || seeds.empty()) {
    std::cerr << "config error (values): sweep needs at least one value and one seed\n";
    return kExitConfig;
  }
  qae::TrainConfig base;
  try {
    // Seeds come from the sweep's --seeds list; 0 placates the seed check.
    base = qae::load_config(config_path, std::uint64_t{0});
  } catch (const qae::ConfigError& e) {
    std::cerr << "config error (" << e.field << "): " << e.what() << '\n';
    return kExitConfig;
  }
  const fs::path root = out ? fs::path(*out) : fs::path("out") / "sweep";
  fs::create_directories(root);

  std::vector<SweepCell> cells;
  for (double value : values) {
    for (std::uint64_t seed : seeds) {
      SweepCell cell;
      cell.value = value;
      cell.seed = seed;
      cell.dir = root / (axis + "_" + format_value(value) + "_seed_" + std::to_string(seed));
      cells.push_back(std::move(cell));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      SweepCell& cell = cells[i];
      qae::TrainConfig cfg = base;
      cfg.seed = cell.seed;
      if (axis == "K") {
        cfg.k = cell.value;
      } else {
        cfg.eps_high = cell.value;
      }
      try {
        qae::validate_config(cfg);
        fs::create_directories(cell.dir);
        qae::write_manifest((cell.dir / "manifest.json").string(), cfg);
        qae::MetricsWriter writer((cell.dir / "metrics.csv").string());
        const qae::RunResult result = qae::run_experiment(cfg, &writer);
        qae::write_policy_dump((cell.dir / "policy_final.json").string(), result.state);
        cell.final_quartile_entropy = qae::presets::final_quartile_mean(
            result.history, &qae::MetricsRecord::entropy_total);
        cell.final_pass_at_1 =
            result.history.empty() ? 0.0 : result.history.back().pass_at_1;
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  const int worker_count = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < worker_count; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  // Summary in fixed cell order, failures included.
  std::ofstream summary(root / "sweep_summary.csv");
  summary << "axis,value,seed,final_quartile_mean_entropy,final_pass_at_1,status\n";
  int failures = 0;
  for (const SweepCell& cell : cells) {
    summary << axis << ',' << format_value(cell.value) << ',' << cell.seed << ',';
    if (cell.failed) {
      summary << ",,failed\n";
      std::cerr << "cell " << cell.dir.string() << " failed: " << cell.error << '\n';
      ++failures;
    } else {
      summary << qae::detail::format_double(cell.final_quartile_entropy) << ','
              << qae::detail::format_double(cell.final_pass_at_1) << ",ok\n";
    }
  }
  std::cout << "sweep complete: " << cells.size() - failures << "/" << cells.size()
            << " cells ok, summary at " << (root / "sweep_summary.csv").string() << '\n';
  return failures == 0 ? kExitOk : kExitRuntime;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

void print_report(const qae::SuiteReport& report) {
  std::printf("%-24s trials=%-6d %s", report.name.c_str(), report.trials,
              report.passed() ? "PASS" : "FAIL");
  if (report.failures > 0) std::printf("  failures=%d", report.failures);
  if (report.outliers > 0) std::printf("  outliers=%d", report.outliers);
  if (report.worst_error > 0.0) std::printf("  worst_error=%.3g", report.worst_error);
  if (std::isfinite(report.min_margin)) {
    std::printf("  min_margin=%.3g", report.min_margin);
  }
  if (report.has_failing_seed) {
    std::printf("  reproduce: --trials 1 --seed %llu",
                static_cast<unsigned long long>(report.failing_seed));
  }
  std::printf("\n");
}

int cmd_verify(const std::string& suite, int trials, std::uint64_t seed) {
  std::vector<qae::SuiteReport> reports;
  const bool all = suite == "all";
  if (all || suite == "prop2") {
    reports.push_back(qae::verify_prop2_extremality(trials == 0 ? 1000 : trials, seed));
    reports.push_back(qae::verify_baseline_monotonicity(trials == 0 ? 1000 : trials, seed));
  }
  if (all || suite == "identity") {
    reports.push_back(qae::verify_first_order_identity(trials == 0 ? 500 : trials, seed));
  }
  if (all || suite == "prop1") {
    reports.push_back(qae::verify_prop1_equivalence(trials == 0 ? 500 : trials, seed));
  }
  if (all || suite == "gradients") {
    reports.push_back(qae::verify_gradients(trials == 0 ? 200 : trials, seed));
  }
  if (reports.empty()) {
    std::cerr << "config error (suite): suite must be one of prop1, prop2, gradients, "
                 "identity, all\n";
    return kExitConfig;
  }
  bool ok = true;
  for (const qae::SuiteReport& report : reports) {
    print_report(report);
    ok = ok && report.passed();
  }
  return ok ? kExitOk : kExitVerifyFail;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (columns[c] == name) {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& row : rows) out.push_back(row[c]);
        return out;
      }
    }
    throw std::runtime_error("column not found: " + name);
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path.string());
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row_stream(line);
    std::vector<double> row;
    while (std::getline(row_stream, cell, ',')) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error("non-numeric cell in " + path.string() + ": " + cell);
      }
      if (pos != cell.size()) {
        throw std::runtime_error("malformed cell in " + path.string() + ": " + cell);
      }
      row.push_back(v);
    }
    if (row.size() != table.columns.size()) {
      throw std::runtime_error("ragged row in " + path.string());
    }
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw std::runtime_error("no data rows in " + path.string());
  return table;
}

void report_single_run(const fs::path& dir) {
  const CsvTable table = read_csv(dir / "metrics.csv");
  const std::vector<double> steps = table.column("step");

  qae::write_svg((dir / "entropy.svg").string(),
                 qae::render_line_chart(
                     "Policy entropy", "step", "entropy",
                     {{"total", steps, table.column("entropy_total")},
                      {"positive-advantage", steps, table.column("entropy_pos_adv")},
                      {"negative-advantage", steps, table.column("entropy_neg_adv")}}));
  qae::write_svg((dir / "pass.svg").string(),
                 qae::render_line_chart("Accuracy", "step", "pass@k",
                                        {{"pass@1", steps, table.column("pass_at_1")},
                                         {"pass@16", steps, table.column("pass_at_16")}}));
  qae::write_svg((dir / "zero_adv.svg").string(),
                 qae::render_line_chart(
                     "Zero-advantage fraction", "step", "fraction",
                     {{"zero_adv_fraction", steps, table.column("zero_adv_fraction")}}));
  std::cout << "wrote entropy.svg, pass.svg, zero_adv.svg under " << dir.string() << '\n';
}

void report_sweep(const fs::path& dir) {
  // One series per axis value: metric averaged over seeds at each step.
  std::map<std::string, std::vector<CsvTable>> by_value;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const fs::path metrics = entry.path() / "metrics.csv";
    if (!fs::exists(metrics)) continue;
    const std::string name = entry.path().filename().string();
    const auto first = name.find('_');
    const auto seed_pos = name.find("_seed_");
    if (first == std::string::npos || seed_pos == std::string::npos) continue;
    const std::string value = name.substr(first + 1, seed_pos - first - 1);
    by_value[value].push_back(read_csv(metrics));
  }
  if (by_value.empty()) throw std::runtime_error("no run directories under " + dir.string());

  const std::pair<std::string, std::string> charts[] = {
      {"entropy_total", "entropy_overlay.svg"},
      {"pass_at_1", "pass_overlay.svg"},
      {"zero_adv_fraction", "zero_adv_overlay.svg"},
  };
  for (const auto& [metric, filename] : charts) {
    std::vector<qae::Series> series;
    for (const auto& [value, tables] : by_value) {
      qae::Series s;
      s.label = value + " (" + std::to_string(tables.size()) + " seeds)";
      const std::size_t steps = tables.front().rows.size();
      s.x = tables.front().column("step");
      s.y.assign(steps, 0.0);
      for (const CsvTable& table : tables) {
        const std::vector<double> col = table.column(metric);
        for (std::size_t i = 0; i < steps && i < col.size(); ++i) s.y[i] += col[i];
      }
      for (double& y : s.y) y /= static_cast<double>(tables.size());
      series.push_back(std::move(s));
    }
    qae::write_svg((dir / filename).string(),
                   qae::render_line_chart(metric + " by value", "step", metric, series));
  }
  std::cout << "wrote overlay charts under " << dir.string() << '\n';
}

int cmd_report(const std::string& dir_arg) {
  const fs::path dir(dir_arg);
  try {
    if (fs::exists(dir / "sweep_summary.csv")) {
      report_sweep(dir);
    } else if (fs::exists(dir / "metrics.csv")) {
      report_single_run(dir);
    } else {
      throw std::runtime_error("no metrics.csv or sweep_summary.csv under " + dir.string());
    }
  } catch (const std::exception& e) {
    std::cerr << "report failed: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("qae-lab ") + qae::kVersion +
               " - advantage-baseline experiments on synthetic verifiable-reward tasks"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed_flag;

  CLI::App* run = app.add_subcommand("run", "execute one training run");
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--out", out_dir, "output directory for this run");
  run->add_option("--seed", seed_flag, "seed override");

  CLI::App* sweep = app.add_subcommand("sweep", "run a grid of (axis value, seed) cells");
  std::string axis = "K";
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  sweep->add_option("--config", config_path, "JSON base config file");
  sweep->add_option("--out", out_dir, "sweep output root");
  sweep->add_option("--axis", axis, "swept field: K or eps_high");
  sweep->add_option("--values", values, "axis values")->delimiter(',');
  sweep->add_option("--seeds", seeds, "seeds per value")->delimiter(',');
  sweep->add_option("--jobs", jobs, "max parallel cells");

  CLI::App* verify = app.add_subcommand("verify", "randomized property suites");
  std::string suite = "all";
  int trials = 0;
  std::uint64_t verify_seed = 2024;
  verify->add_option("--suite", suite, "prop1 | prop2 | gradients | identity | all");
  verify->add_option("--trials", trials, "instances per suite (0 = suite default)");
  verify->add_option("--seed", verify_seed, "base seed for instance generation");

  CLI::App* report = app.add_subcommand("report", "render SVG charts for a run or sweep dir");
  std::string report_dir;
  report->add_option("dir", report_dir, "run or sweep directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed_flag, out_dir);
    if (sweep->parsed()) return cmd_sweep(config_path, axis, values, seeds, out_dir, jobs);
    if (verify->parsed()) return cmd_verify(suite, trials, verify_seed);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
