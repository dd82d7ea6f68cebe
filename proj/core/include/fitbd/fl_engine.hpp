#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fitbd/adapter_model.hpp"
#include "fitbd/config.hpp"
#include "fitbd/eval_metrics.hpp"
#include "fitbd/signal_probe.hpp"
#include "fitbd/synth_task.hpp"

namespace fitbd {

// Everything a simulated federation needs between rounds. All clients start
// a round from the same global_model.
struct FederationState {
  ExperimentConfig config;
  Vocab vocab;
  TriggerSpec trigger;
  std::vector<ClientShard> shards;  // sorted by client_id, one per client
  EvalSuite eval;
  AdapterModel global_model;
  std::size_t round_index = 0;
  std::uint64_t rng_root = 0;

  // Encodings derived from shards/eval; rebuilt by initialize_federation.
  std::vector<std::vector<TrainingPair>> client_data;
  std::shared_ptr<const EncodedEvalSuite> encoded_eval;
};

// Builds vocabulary, data, IID shards, affected clients, poison and the
// initial model, all from config.seed.
FederationState initialize_federation(const ExperimentConfig& config);

// Per-client, per-round stream seed: independent of execution order.
std::uint64_t client_round_seed(std::uint64_t root, int client_id, std::size_t round);

// Mini-batch SGD for `epochs` passes from a private copy of `global`; returns
// flatten(local) - flatten(global).
FlatVector local_train(const AdapterModel& global, std::span<const TrainingPair> data,
                       std::size_t epochs, double lr, std::size_t batch_size, Rng& rng);
FlatVector local_train(const AdapterModel& global, const ClientShard& shard, std::size_t epochs,
                       double lr, std::size_t batch_size, Rng& rng);

struct ClientUpdate {
  int client_id;
  FlatVector delta;
  bool affected;
  double weight;
};

struct RoundRecord {
  std::size_t round;
  std::vector<ClientUpdate> client_updates;  // ascending client_id
  FlatVector global_update;
  double ma;
  double asr;
  Bsnr bsnr = Bsnr::undefined();
  std::string aggregator;
  // Client ids kept by a filtering aggregator; nullopt for the others.
  std::optional<std::vector<int>> accepted_clients;
};

struct RoundOptions {
  bool probe = true;
  // Concurrent local-training lanes; results do not depend on this.
  std::size_t lanes = 1;
  // Order in which clients are dispatched (a permutation of shard positions).
  std::optional<std::vector<std::size_t>> execution_order;
};

RoundRecord run_round(FederationState& state, const RoundOptions& options = {});

struct ExperimentResult {
  std::vector<RoundRecord> records;
  double initial_ma = 0.0;
  double initial_asr = 0.0;
  AdapterModel final_model;
  std::size_t affected_clients = 0;
};

using RoundObserver = std::function<void(const RoundRecord&, const FederationState&)>;

ExperimentResult run_experiment(const ExperimentConfig& config, const RoundOptions& options = {},
                                const RoundObserver& observer = {});

// Continues a (possibly resumed) federation until config.total_rounds.
ExperimentResult continue_experiment(FederationState state, const RoundOptions& options = {},
                                     const RoundObserver& observer = {});

// Checkpoint: magic, round index, canonical config text, model checkpoint.
// Data is regenerated from the config on load, so resumed runs are exact.
void save_federation(std::ostream& out, const FederationState& state);
FederationState load_federation(std::istream& in);

}  // namespace fitbd
