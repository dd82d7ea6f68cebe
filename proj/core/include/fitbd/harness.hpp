#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fitbd/config.hpp"
#include "fitbd/fl_engine.hpp"

namespace fitbd {

struct HarnessOptions {
  // Artifacts are written here when set; commands still return their results otherwise.
  std::optional<std::filesystem::path> out_dir;
  // Grid points run concurrently in this many lanes (single runs use it for clients).
  std::size_t parallel = 1;
};

// root ^ hash of the value's shortest decimal text.
std::uint64_t point_seed(std::uint64_t root, double value);

struct RunSummary {
  double final_ma = 0.0;
  double final_asr = 0.0;
  std::optional<double> peak_bsnr;
  std::optional<std::size_t> peak_round;
  std::size_t rounds = 0;
};

std::string format_summary(const RunSummary& summary);

struct RunOutput {
  std::vector<RoundRecord> records;  // only the rounds executed by this call
  RunSummary summary;
  std::optional<std::filesystem::path> csv_path;
};

// One experiment. With out_dir set, writes run_<tag>.csv row by row and, when
// config.checkpoint_interval > 0, a run_<tag>.ckpt every that many rounds.
RunOutput cmd_run(const ExperimentConfig& config, const HarnessOptions& options = {});

// Continues from a checkpoint written by cmd_run; the rounds CSV next to it is
// trimmed to the checkpointed round and extended, ending byte-identical to an
// uninterrupted run.
RunOutput resume_run(const std::filesystem::path& checkpoint, const HarnessOptions& options);

struct SweepRow {
  double value = 0.0;
  double final_ma = 0.0;
  double final_asr = 0.0;
  std::optional<double> peak_bsnr;
  std::optional<std::size_t> peak_round;
  std::string aggregator;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;  // ascending by value
};

std::string sweep_csv_header(const SweepResult& result);
std::string sweep_csv_row(const SweepRow& row);
std::string sweep_csv(const SweepResult& result);

// Grids must lie in [0,1], strictly ascending (duplicates are rejected).
SweepResult cmd_sweep_pr(const ExperimentConfig& config, std::span<const double> pr_grid,
                         const HarnessOptions& options = {});
SweepResult cmd_sweep_rho(const ExperimentConfig& config, std::span<const double> rho_grid,
                          const HarnessOptions& options = {});

struct MinPrRow {
  double rho = 0.0;
  std::optional<double> min_pr;  // nullopt: target not reached up to pr_max
  std::size_t experiments = 0;
};

struct MinPrOptions {
  double asr_target = 0.60;
  double pr_step = 0.01;
  double pr_max = 1.0;
};

// Ascending linear PR scan per rho; every PR probe of one rho shares that rho's seed.
std::vector<MinPrRow> cmd_min_pr(const ExperimentConfig& config, std::span<const double> rho_grid,
                                 const MinPrOptions& scan = {}, const HarnessOptions& options = {});

// Rejects rho outside the open interval (0,1): the direction needs both groups.
std::vector<BsnrTrace> cmd_bsnr_trace(const ExperimentConfig& config,
                                      std::span<const double> rho_grid,
                                      const HarnessOptions& options = {});

// aggregators x rho grid; seeds depend on rho only, so the FedAvg rows match cmd_sweep_rho.
std::vector<SweepResult> cmd_defense_eval(const ExperimentConfig& config,
                                          std::span<const AggregatorPolicy> aggregators,
                                          std::span<const double> rho_grid,
                                          const HarnessOptions& options = {});

}  // namespace fitbd
