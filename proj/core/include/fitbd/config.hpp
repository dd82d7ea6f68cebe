#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "fitbd/aggregators.hpp"
#include "fitbd/synth_task.hpp"

namespace fitbd {

struct ExperimentConfig {
  std::size_t n_clients = 10;
  double rho = 1.0;
  double pr = 0.10;
  TriggerMode trigger_mode = TriggerMode::kInjected;
  int target_label = 0;
  std::size_t total_rounds = 100;
  std::size_t local_epochs = 1;
  double lr = 10.0;
  std::size_t batch_size = 32;
  AggregatorPolicy aggregator = FedAvgPolicy{};
  std::uint64_t seed = 42;

  VocabShape vocab;
  SampleShape sample;
  std::size_t rank = 4;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;

  // Write a federation checkpoint every this many rounds; 0 disables.
  std::size_t checkpoint_interval = 0;

  std::size_t vocab_size() const noexcept {
    return vocab.n_classes * vocab.sig_per_class + vocab.n_natural + vocab.n_injected +
           vocab.n_noise;
  }

  bool operator==(const ExperimentConfig&) const = default;
};

// Throws Error(kConfig) naming the offending field.
void validate(const ExperimentConfig& config);

// Flat "key = value" text; '#' starts a comment. Unknown keys, duplicate keys
// and malformed values are errors that cite the line number. Keys not present
// keep their defaults.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical text covering every field, in a fixed order; parse_config inverts it.
std::string format_config(const ExperimentConfig& config);

std::uint64_t config_fingerprint(const ExperimentConfig& config);

}  // namespace fitbd
