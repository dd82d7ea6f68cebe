// fitbd: command line driver for the federated backdoor simulator.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fitbd/aggregators.hpp"
#include "fitbd/config.hpp"
#include "fitbd/csv.hpp"
#include "fitbd/error.hpp"
#include "fitbd/harness.hpp"
#include "fitbd/log.hpp"
#include "fitbd/svg_plot.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t parallel = 1;
  std::vector<std::string> overrides;
  std::string log_level = "warning";
};

// Overrides replace lines of the canonical config text, so they get the same
// key and value checking as a config file.
fitbd::ExperimentConfig build_config(const Globals& g) {
  fitbd::ExperimentConfig base;
  if (!g.config_path.empty()) base = fitbd::load_config_file(g.config_path);
  if (g.seed) base.seed = *g.seed;
  if (g.overrides.empty()) {
    fitbd::validate(base);
    return base;
  }
  std::map<std::string, std::string> replace;
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fitbd::fail(fitbd::ErrorCode::kConfig, "--set expects key=value: " + o);
    std::string key = o.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    if (!replace.emplace(key, o.substr(eq + 1)).second) {
      fitbd::fail(fitbd::ErrorCode::kConfig, "--set given twice for " + key);
    }
  }
  std::istringstream canonical(fitbd::format_config(base));
  std::string text, line;
  while (std::getline(canonical, line)) {
    const std::string key = line.substr(0, line.find(' '));
    if (auto it = replace.find(key); it != replace.end()) {
      text += key + " = " + it->second + "\n";
      replace.erase(it);
    } else {
      text += line + "\n";
    }
  }
  if (!replace.empty()) {
    fitbd::fail(fitbd::ErrorCode::kConfig, "--set: unknown key " + replace.begin()->first);
  }
  fitbd::ExperimentConfig config = fitbd::parse_config(text);
  fitbd::validate(config);
  return config;
}

fitbd::HarnessOptions harness(const Globals& g) {
  fitbd::HarnessOptions options;
  options.out_dir = g.out;
  options.parallel = g.parallel;
  return options;
}

void print_sweep(const fitbd::SweepResult& result) {
  std::fputs(fitbd::sweep_csv(result).c_str(), stdout);
}

fitbd::LogLevel parse_level(const std::string& text) {
  if (text == "debug") return fitbd::LogLevel::kDebug;
  if (text == "info") return fitbd::LogLevel::kInfo;
  if (text == "warning") return fitbd::LogLevel::kWarning;
  if (text == "silent") return fitbd::LogLevel::kSilent;
  fitbd::fail(fitbd::ErrorCode::kConfig, "unknown log level " + text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale simulator of backdoors in federated instruction tuning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "experiment config file (key = value)");
  app.add_option("--seed", g.seed, "root seed, overrides the config");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--parallel", g.parallel, "concurrent lanes")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--set", g.overrides, "override a config key, key=value (repeatable)");
  app.add_option("--log-level", g.log_level, "debug|info|warning|silent")->capture_default_str();

  auto* run = app.add_subcommand("run", "one experiment; writes the rounds csv");
  std::string resume;
  run->add_option("--resume", resume, "continue from a run checkpoint");

  std::vector<double> pr_grid{0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
  auto* sweep_pr = app.add_subcommand("sweep-pr", "final MA/ASR across poison ratios");
  sweep_pr->add_option("--grid", pr_grid, "ascending PR values")->delimiter(',')->capture_default_str();

  std::vector<double> rho_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  auto* sweep_rho = app.add_subcommand("sweep-rho", "final MA/ASR across affected-client fractions");
  sweep_rho->add_option("--grid", rho_grid, "ascending rho values")->delimiter(',')->capture_default_str();

  std::vector<double> min_grid{0.2, 0.4, 0.6, 0.8, 1.0};
  fitbd::MinPrOptions scan;
  auto* min_pr = app.add_subcommand("min-pr", "smallest PR reaching an ASR target, per rho");
  min_pr->add_option("--grid", min_grid, "ascending rho values")->delimiter(',')->capture_default_str();
  min_pr->add_option("--asr-target", scan.asr_target)->capture_default_str();
  min_pr->add_option("--pr-step", scan.pr_step)->capture_default_str();
  min_pr->add_option("--pr-max", scan.pr_max)->capture_default_str();

  std::vector<double> trace_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  auto* trace = app.add_subcommand("bsnr-trace", "per-round BSNR traces and their peaks");
  trace->add_option("--grid", trace_grid, "rho values in (0,1)")->delimiter(',')->capture_default_str();

  std::vector<double> defense_grid{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> aggregators{"fedavg", "krum", "freqfed", "foundationfl"};
  auto* defense = app.add_subcommand("defense-eval", "aggregators x rho");
  defense->add_option("--grid", defense_grid, "ascending rho values")->delimiter(',')->capture_default_str();
  defense->add_option("--aggregator", aggregators, "policy, e.g. krum:f=2 (repeatable)")->capture_default_str();

  std::string plot_csv, plot_x, plot_output, plot_title;
  std::vector<std::string> plot_y;
  auto* plot = app.add_subcommand("plot", "render csv columns as an svg line chart");
  plot->add_option("--csv", plot_csv)->required();
  plot->add_option("--x", plot_x)->required();
  plot->add_option("--y", plot_y, "y column (repeatable)")->required();
  plot->add_option("--output", plot_output, "svg path; default plot_<csv stem>.svg under --out");
  plot->add_option("--title", plot_title);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    fitbd::set_log_level(parse_level(g.log_level));
    if (plot->parsed()) {
      std::filesystem::path out = plot_output;
      if (out.empty()) {
        std::filesystem::create_directories(g.out);
        out = std::filesystem::path(g.out) /
              fmt::format("plot_{}.svg", std::filesystem::path(plot_csv).stem().string());
      }
      fitbd::render_svg_file(plot_csv, plot_x, plot_y, out.string(), {plot_title});
      fmt::print("{}\n", out.string());
      return 0;
    }
    if (run->parsed() && !resume.empty()) {
      const auto output = fitbd::resume_run(resume, harness(g));
      fmt::print("{}\n{}\n", output.csv_path->string(), fitbd::format_summary(output.summary));
      return 0;
    }

    const fitbd::ExperimentConfig config = build_config(g);
    const fitbd::HarnessOptions options = harness(g);
    if (run->parsed()) {
      const auto output = fitbd::cmd_run(config, options);
      fmt::print("{}\n{}\n", output.csv_path->string(), fitbd::format_summary(output.summary));
    } else if (sweep_pr->parsed()) {
      print_sweep(fitbd::cmd_sweep_pr(config, pr_grid, options));
    } else if (sweep_rho->parsed()) {
      print_sweep(fitbd::cmd_sweep_rho(config, rho_grid, options));
    } else if (min_pr->parsed()) {
      fmt::print("rho,min_pr,experiments\n");
      for (const auto& row : fitbd::cmd_min_pr(config, min_grid, scan, options)) {
        fmt::print("{},{},{}\n", fitbd::format_real(row.rho),
                   row.min_pr ? fitbd::format_real(*row.min_pr) : "not_reached", row.experiments);
      }
    } else if (trace->parsed()) {
      for (const auto& t : fitbd::cmd_bsnr_trace(config, trace_grid, options)) {
        fmt::print("{}\n", fitbd::trace_summary_json(t));
      }
    } else if (defense->parsed()) {
      std::vector<fitbd::AggregatorPolicy> policies;
      for (const auto& text : aggregators) policies.push_back(fitbd::parse_policy(text));
      const auto results = fitbd::cmd_defense_eval(config, policies, defense_grid, options);
      fmt::print("{}\n", fitbd::sweep_csv_header(results.front()));
      for (const auto& r : results) {
        for (const auto& row : r.rows) fmt::print("{}\n", fitbd::sweep_csv_row(row));
      }
    }
    return 0;
  } catch (const fitbd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config_error =
        e.code() == fitbd::ErrorCode::kConfig || e.code() == fitbd::ErrorCode::kParse;
    return config_error ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
