#include "fitbd/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fitbd/csv.hpp"
#include "fitbd/error.hpp"
#include "fitbd/log.hpp"
#include "fitbd/random.hpp"

namespace fitbd {
namespace fs = std::filesystem;
namespace {

template <class Fn>
void for_each_point(std::size_t n, std::size_t lanes, Fn fn) {
  lanes = std::min(std::max<std::size_t>(lanes, 1), n);
  if (lanes <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t l = 0; l < lanes; ++l) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_file_atomically(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out << bytes;
    if (!out) fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
  return dir;
}

std::string file_safe(std::string_view text) {
  std::string out;
  for (char c : text) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-';
    out += ok ? c : '_';
  }
  return out;
}

std::string run_tag(const ExperimentConfig& config) {
  return fmt::format("{:016x}", config_fingerprint(config));
}

std::string grid_tag(const ExperimentConfig& config, std::string_view extra,
                     std::span<const double> grid) {
  std::string text = format_config(config);
  text += extra;
  for (double v : grid) text += "|" + format_real(v);
  return fmt::format("{:016x}", hash_bytes(text));
}

void check_grid(std::span<const double> grid, std::string_view name) {
  if (grid.empty()) fail(ErrorCode::kConfig, fmt::format("{} grid is empty", name));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || grid[i] < 0.0 || grid[i] > 1.0) {
      fail(ErrorCode::kConfig, fmt::format("{} grid value {} outside [0,1]", name, grid[i]));
    }
    if (i > 0 && grid[i] == grid[i - 1]) {
      fail(ErrorCode::kConfig, fmt::format("duplicate {} grid value {}", name, grid[i]));
    }
    if (i > 0 && grid[i] < grid[i - 1]) {
      fail(ErrorCode::kConfig, fmt::format("{} grid must be ascending", name));
    }
  }
}

std::vector<Bsnr> bsnr_values(std::span<const RoundRecord> records) {
  std::vector<Bsnr> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(r.bsnr);
  return values;
}

RunSummary summarize(std::span<const Bsnr> trace, double final_ma, double final_asr) {
  RunSummary summary{final_ma, final_asr, std::nullopt, std::nullopt, trace.size()};
  bool any_defined = false;
  for (const auto& b : trace) any_defined = any_defined || b.is_defined();
  if (any_defined) {
    const TraceSummary s = summarize_trace(trace);
    summary.peak_bsnr = s.peak_bsnr;
    summary.peak_round = s.peak_round;
  }
  return summary;
}

RunSummary summarize(const ExperimentResult& result) {
  const auto trace = bsnr_values(result.records);
  if (result.records.empty()) return summarize(trace, result.initial_ma, result.initial_asr);
  return summarize(trace, result.records.back().ma, result.records.back().asr);
}

std::string rounds_text(std::span<const RoundRecord> records) {
  std::ostringstream out;
  write_rounds_csv(out, records);
  return out.str();
}

struct PointOutcome {
  SweepRow row;
  std::vector<Bsnr> trace;
};

// One grid point: full experiment, optional per-point rounds CSV.
PointOutcome run_point(const ExperimentConfig& config, double value,
                       const std::optional<fs::path>& rounds_path) {
  log_info(fmt::format("point {} seed {}", format_real(value), config.seed));
  const ExperimentResult result = run_experiment(config);
  const RunSummary s = summarize(result);
  if (rounds_path) write_file_atomically(*rounds_path, rounds_text(result.records));
  return {{value, s.final_ma, s.final_asr, s.peak_bsnr, s.peak_round, policy_label(config.aggregator)},
          bsnr_values(result.records)};
}

std::string optional_text(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string("undefined");
}

SweepResult sweep(const ExperimentConfig& config, std::span<const double> grid, std::string_view param,
                  std::string_view command, const HarnessOptions& options) {
  check_grid(grid, param);
  std::vector<ExperimentConfig> points;
  for (double v : grid) {
    ExperimentConfig c = config;
    if (param == "pr") c.pr = v;
    else c.rho = v;
    c.seed = point_seed(config.seed, v);
    validate(c);
    points.push_back(std::move(c));
  }
  std::optional<fs::path> dir;
  std::string tag;
  if (options.out_dir) {
    dir = prepare_out(*options.out_dir);
    tag = grid_tag(config, command, grid);
  }
  SweepResult result{std::string(param), std::vector<SweepRow>(grid.size())};
  for_each_point(grid.size(), options.parallel, [&](std::size_t i) {
    std::optional<fs::path> rounds;
    if (dir) rounds = *dir / fmt::format("{}_{}_{}{}.csv", command, tag, param, format_real(grid[i]));
    result.rows[i] = run_point(points[i], grid[i], rounds).row;
  });
  if (dir) write_file_atomically(*dir / fmt::format("{}_{}.csv", command, tag), sweep_csv(result));
  return result;
}

double step_value(std::size_t k, double step) {
  return std::round(static_cast<double>(k) * step * 1e12) / 1e12;
}

}  // namespace

std::uint64_t point_seed(std::uint64_t root, double value) {
  return root ^ hash_bytes(format_real(value));
}

std::string format_summary(const RunSummary& s) {
  return fmt::format("rounds={} final_ma={} final_asr={} peak_bsnr={} peak_round={}", s.rounds,
                     format_real(s.final_ma), format_real(s.final_asr), optional_text(s.peak_bsnr),
                     s.peak_round ? std::to_string(*s.peak_round) : std::string("undefined"));
}

namespace {

// Drives the remaining rounds of `state`, appending rows to `csv` and
// checkpointing next to it.
ExperimentResult drive(FederationState state, const HarnessOptions& options, std::ofstream* csv,
                       const std::optional<fs::path>& checkpoint) {
  const std::size_t interval = state.config.checkpoint_interval;
  RoundOptions round_options;
  round_options.lanes = options.parallel;
  RoundObserver observer = [&](const RoundRecord& record, const FederationState& s) {
    if (csv) {
      *csv << rounds_csv_row(record) << '\n';
      csv->flush();
      if (!*csv) fail(ErrorCode::kIo, "failed writing rounds csv");
    }
    if (checkpoint && interval > 0 && s.round_index % interval == 0) {
      std::ostringstream bytes;
      save_federation(bytes, s);
      write_file_atomically(*checkpoint, bytes.str());
    }
  };
  return continue_experiment(std::move(state), round_options, observer);
}

}  // namespace

RunOutput cmd_run(const ExperimentConfig& config, const HarnessOptions& options) {
  validate(config);
  RunOutput output;
  std::ofstream csv;
  std::optional<fs::path> checkpoint;
  if (options.out_dir) {
    const fs::path dir = prepare_out(*options.out_dir);
    const std::string tag = run_tag(config);
    output.csv_path = dir / fmt::format("run_{}.csv", tag);
    checkpoint = dir / fmt::format("run_{}.ckpt", tag);
    csv.open(*output.csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) fail(ErrorCode::kIo, "cannot write " + output.csv_path->string());
    csv << kRoundsHeader << '\n';
  }
  ExperimentResult result =
      drive(initialize_federation(config), options, options.out_dir ? &csv : nullptr, checkpoint);
  output.summary = summarize(result);
  output.records = std::move(result.records);
  return output;
}

RunOutput resume_run(const fs::path& checkpoint, const HarnessOptions& options) {
  FederationState state = [&] {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + checkpoint.string());
    return load_federation(in);
  }();
  fs::path csv_path = checkpoint;
  csv_path.replace_extension(".csv");
  CsvTable kept = read_csv_file(csv_path.string());
  if (fmt::format("{}", fmt::join(kept.header, ",")) != kRoundsHeader) {
    fail(ErrorCode::kIo, csv_path.string() + " is not a rounds csv");
  }
  if (kept.rows.size() < state.round_index) {
    fail(ErrorCode::kIo, fmt::format("{} holds {} rounds but the checkpoint is at round {}",
                                     csv_path.string(), kept.rows.size(), state.round_index));
  }
  kept.rows.resize(state.round_index);

  std::vector<Bsnr> trace;
  std::string text = std::string(kRoundsHeader) + "\n";
  for (const auto& row : kept.rows) {
    trace.push_back(Bsnr::parse(row[3]));
    text += fmt::format("{}\n", fmt::join(row, ","));
  }
  write_file_atomically(csv_path, text);
  std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
  if (!csv) fail(ErrorCode::kIo, "cannot append to " + csv_path.string());

  const std::size_t resumed_at = state.round_index;
  log_info(fmt::format("resuming at round {}", resumed_at));
  ExperimentResult result = drive(std::move(state), options, &csv, checkpoint);
  for (const auto& b : bsnr_values(result.records)) trace.push_back(b);

  RunOutput output;
  output.csv_path = csv_path;
  if (!result.records.empty()) {
    output.summary = summarize(trace, result.records.back().ma, result.records.back().asr);
  } else if (!kept.rows.empty()) {
    output.summary = summarize(trace, std::stod(kept.rows.back()[1]), std::stod(kept.rows.back()[2]));
  } else {
    output.summary = summarize(trace, result.initial_ma, result.initial_asr);
  }
  output.records = std::move(result.records);
  return output;
}

std::string sweep_csv_header(const SweepResult& result) {
  return result.parameter + ",final_ma,final_asr,peak_bsnr,peak_round,aggregator";
}

std::string sweep_csv_row(const SweepRow& row) {
  return fmt::format("{},{},{},{},{},{}", format_real(row.value), format_real(row.final_ma),
                     format_real(row.final_asr), optional_text(row.peak_bsnr),
                     row.peak_round ? std::to_string(*row.peak_round) : std::string("undefined"),
                     row.aggregator);
}

std::string sweep_csv(const SweepResult& result) {
  std::string text = sweep_csv_header(result) + "\n";
  for (const auto& row : result.rows) text += sweep_csv_row(row) + "\n";
  return text;
}

SweepResult cmd_sweep_pr(const ExperimentConfig& config, std::span<const double> pr_grid,
                         const HarnessOptions& options) {
  return sweep(config, pr_grid, "pr", "sweep-pr", options);
}

SweepResult cmd_sweep_rho(const ExperimentConfig& config, std::span<const double> rho_grid,
                          const HarnessOptions& options) {
  return sweep(config, rho_grid, "rho", "sweep-rho", options);
}

std::vector<MinPrRow> cmd_min_pr(const ExperimentConfig& config, std::span<const double> rho_grid,
                                 const MinPrOptions& scan, const HarnessOptions& options) {
  check_grid(rho_grid, "rho");
  if (!(scan.asr_target >= 0.0 && scan.asr_target <= 1.0)) {
    fail(ErrorCode::kConfig, "asr_target must lie in [0,1]");
  }
  if (!(scan.pr_step > 0.0 && scan.pr_step <= 1.0)) fail(ErrorCode::kConfig, "pr_step must lie in (0,1]");
  if (!(scan.pr_max > 0.0 && scan.pr_max <= 1.0)) fail(ErrorCode::kConfig, "pr_max must lie in (0,1]");
  validate(config);

  std::vector<MinPrRow> rows(rho_grid.size());
  for_each_point(rho_grid.size(), options.parallel, [&](std::size_t i) {
    const double rho = rho_grid[i];
    rows[i].rho = rho;
    if (rounded_count(rho, config.n_clients) == 0) return;  // nobody can carry poison
    ExperimentConfig c = config;
    c.rho = rho;
    c.seed = point_seed(config.seed, rho);
    RoundOptions quiet;
    quiet.probe = false;
    for (std::size_t k = 1;; ++k) {
      const double pr = step_value(k, scan.pr_step);
      if (pr > scan.pr_max + 1e-12) break;
      c.pr = pr;
      const ExperimentResult result = run_experiment(c, quiet);
      ++rows[i].experiments;
      const double asr = result.records.empty() ? result.initial_asr : result.records.back().asr;
      if (asr >= scan.asr_target) {
        rows[i].min_pr = pr;
        break;
      }
    }
    log_info(fmt::format("rho {} min_pr {}", format_real(rho),
                         rows[i].min_pr ? format_real(*rows[i].min_pr) : "not_reached"));
  });

  if (options.out_dir) {
    const fs::path dir = prepare_out(*options.out_dir);
    const std::string extra = fmt::format("min-pr|{}|{}|{}", format_real(scan.asr_target),
                                          format_real(scan.pr_step), format_real(scan.pr_max));
    std::string text = "rho,min_pr,experiments\n";
    for (const auto& row : rows) {
      text += fmt::format("{},{},{}\n", format_real(row.rho),
                          row.min_pr ? format_real(*row.min_pr) : "not_reached", row.experiments);
    }
    write_file_atomically(dir / fmt::format("min-pr_{}.csv", grid_tag(config, extra, rho_grid)), text);
  }
  return rows;
}

std::vector<BsnrTrace> cmd_bsnr_trace(const ExperimentConfig& config,
                                      std::span<const double> rho_grid,
                                      const HarnessOptions& options) {
  check_grid(rho_grid, "rho");
  std::vector<ExperimentConfig> points;
  for (double rho : rho_grid) {
    if (rho <= 0.0 || rho >= 1.0) {
      fail(ErrorCode::kConfig,
           fmt::format("rho {} leaves one client group empty, so the backdoor direction is "
                       "undefined in every round; use 0 < rho < 1",
                       format_real(rho)));
    }
    ExperimentConfig c = config;
    c.rho = rho;
    c.seed = point_seed(config.seed, rho);
    validate(c);
    points.push_back(std::move(c));
  }
  std::optional<fs::path> dir;
  std::string tag;
  if (options.out_dir) {
    dir = prepare_out(*options.out_dir);
    tag = grid_tag(config, "bsnr-trace", rho_grid);
  }
  std::vector<BsnrTrace> traces(rho_grid.size());
  for_each_point(rho_grid.size(), options.parallel, [&](std::size_t i) {
    PointOutcome point = run_point(points[i], rho_grid[i], std::nullopt);
    BsnrTrace& trace = traces[i];
    trace.rho = rho_grid[i];
    trace.per_round = std::move(point.trace);
    trace.config_fingerprint = config_fingerprint(points[i]);
    bool any_defined = false;
    for (const auto& b : trace.per_round) any_defined = any_defined || b.is_defined();
    if (any_defined) trace.summary = summarize_trace(trace.per_round);
    if (dir) {
      std::ostringstream out;
      write_trace_csv(out, trace);
      write_file_atomically(*dir / fmt::format("bsnr-trace_{}_rho{}.csv", tag, format_real(trace.rho)),
                            out.str());
    }
  });
  if (dir) {
    std::string text = "rho,peak_bsnr,peak_round\n";
    for (const auto& t : traces) {
      if (t.summary) {
        text += fmt::format("{},{},{}\n", format_real(t.rho), format_real(t.summary->peak_bsnr),
                            t.summary->peak_round);
      } else {
        text += fmt::format("{},undefined,undefined\n", format_real(t.rho));
      }
    }
    write_file_atomically(*dir / fmt::format("bsnr-trace_{}.csv", tag), text);
  }
  return traces;
}

std::vector<SweepResult> cmd_defense_eval(const ExperimentConfig& config,
                                          std::span<const AggregatorPolicy> aggregators,
                                          std::span<const double> rho_grid,
                                          const HarnessOptions& options) {
  check_grid(rho_grid, "rho");
  if (aggregators.empty()) fail(ErrorCode::kConfig, "no aggregators given");
  std::vector<ExperimentConfig> points;
  std::string extra = "defense-eval";
  for (const auto& policy : aggregators) {
    validate_policy(policy, config.n_clients);
    extra += "|" + policy_label(policy);
    for (double rho : rho_grid) {
      ExperimentConfig c = config;
      c.aggregator = policy;
      c.rho = rho;
      c.seed = point_seed(config.seed, rho);
      validate(c);
      points.push_back(std::move(c));
    }
  }
  std::optional<fs::path> dir;
  std::string tag;
  if (options.out_dir) {
    dir = prepare_out(*options.out_dir);
    tag = grid_tag(config, extra, rho_grid);
  }
  const std::size_t per = rho_grid.size();
  std::vector<SweepResult> results(aggregators.size(), SweepResult{"rho", std::vector<SweepRow>(per)});
  for_each_point(points.size(), options.parallel, [&](std::size_t i) {
    const std::size_t a = i / per, r = i % per;
    std::optional<fs::path> rounds;
    if (dir) {
      rounds = *dir / fmt::format("defense-eval_{}_{}_rho{}.csv", tag,
                                  file_safe(policy_label(aggregators[a])), format_real(rho_grid[r]));
    }
    results[a].rows[r] = run_point(points[i], rho_grid[r], rounds).row;
  });
  if (dir) {
    std::string text = sweep_csv_header(results.front()) + "\n";
    for (const auto& result : results) {
      for (const auto& row : result.rows) text += sweep_csv_row(row) + "\n";
    }
    write_file_atomically(*dir / fmt::format("defense-eval_{}.csv", tag), text);
  }
  return results;
}

}  // namespace fitbd
