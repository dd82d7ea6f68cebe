#include "fitbd/fl_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "fitbd/error.hpp"
#include "fitbd/log.hpp"

namespace fitbd {
namespace {

// Sub-stream tags under the root seed.
enum Stream : std::uint64_t {
  kVocabStream = 1,
  kTrainDataStream,
  kPartitionStream,
  kAffectedStream,
  kPoisonStream,
  kTestDataStream,
  kTestTriggerStream,
  kModelStream,
  kAggregateStream,
  kClientStream,
};

constexpr char kFederationMagic[8] = {'F', 'I', 'T', 'B', 'D', 'F', 'S', '1'};

}  // namespace

std::uint64_t client_round_seed(std::uint64_t root, int client_id, std::size_t round) {
  return derive_seed(derive_seed(root, kClientStream), static_cast<std::uint64_t>(client_id), round);
}

FederationState initialize_federation(const ExperimentConfig& config) {
  validate(config);
  const std::uint64_t root = config.seed;

  Rng vocab_rng(derive_seed(root, kVocabStream));
  Vocab vocab = build_vocab(config.vocab, vocab_rng);
  TriggerSpec trigger = make_trigger_spec(vocab, config.trigger_mode, config.target_label);

  Rng train_rng(derive_seed(root, kTrainDataStream));
  auto train = sample_clean_dataset(vocab, config.sample, config.n_train, train_rng);
  Rng partition_rng(derive_seed(root, kPartitionStream));
  auto shards = partition_iid(std::move(train), config.n_clients, partition_rng);
  Rng affected_rng(derive_seed(root, kAffectedStream));
  shards = mark_affected(std::move(shards), config.rho, affected_rng);

  std::size_t n_affected = 0;
  for (auto& shard : shards) {
    if (!shard.affected) continue;
    ++n_affected;
    Rng poison_rng(derive_seed(root, kPoisonStream, static_cast<std::uint64_t>(shard.client_id)));
    shard = poison_shard(std::move(shard), config.pr, trigger, poison_rng);
  }
  log_info(fmt::format("rho={} over {} clients -> {} affected client(s)", config.rho,
                       config.n_clients, n_affected));

  Rng test_rng(derive_seed(root, kTestDataStream));
  auto test = sample_clean_dataset(vocab, config.sample, config.n_test, test_rng);
  Rng test_trigger_rng(derive_seed(root, kTestTriggerStream));
  EvalSuite eval = build_eval_suite(std::move(test), trigger, test_trigger_rng);

  Rng model_rng(derive_seed(root, kModelStream));
  AdapterModel model =
      AdapterModel::init(vocab.total_size, vocab.n_classes(), config.rank, model_rng);

  FederationState state{config, std::move(vocab), std::move(trigger), std::move(shards),
                        std::move(eval), std::move(model), 0, root, {}, nullptr};
  for (const auto& shard : state.shards) {
    state.client_data.push_back(encode_examples(shard.examples, state.vocab.total_size));
  }
  state.encoded_eval = std::make_shared<const EncodedEvalSuite>(state.eval, state.vocab.total_size);
  return state;
}

FlatVector local_train(const AdapterModel& global, std::span<const TrainingPair> data,
                       std::size_t epochs, double lr, std::size_t batch_size, Rng& rng) {
  if (data.empty()) fail(ErrorCode::kEmptyShard, "client has no local examples");
  if (epochs < 1) fail(ErrorCode::kInvalidArgument, "local training needs at least one epoch");
  if (batch_size < 1) fail(ErrorCode::kInvalidArgument, "batch size must be positive");
  AdapterModel local = global;
  std::vector<std::size_t> order(data.size());
  std::vector<TrainingPair> batch;
  batch.reserve(batch_size);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data[order[i]]);
      local = sgd_step(local, loss_and_grad(local, batch).grad, lr);
    }
  }
  return local.flatten_adapter() - global.flatten_adapter();
}

FlatVector local_train(const AdapterModel& global, const ClientShard& shard, std::size_t epochs,
                       double lr, std::size_t batch_size, Rng& rng) {
  const auto data = encode_examples(shard.examples, global.vocab_size());
  return local_train(global, data, epochs, lr, batch_size, rng);
}

RoundRecord run_round(FederationState& state, const RoundOptions& options) {
  const auto& config = state.config;
  if (state.round_index >= config.total_rounds) {
    fail(ErrorCode::kInvalidArgument, "federation already completed all rounds");
  }
  const std::size_t k = state.shards.size();
  const std::size_t round = state.round_index;

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (options.execution_order) {
    order = *options.execution_order;
    std::vector<std::size_t> check = order;
    std::sort(check.begin(), check.end());
    for (std::size_t i = 0; i < check.size(); ++i) {
      if (check.size() != k || check[i] != i) {
        fail(ErrorCode::kInvalidArgument, "execution order is not a permutation of the clients");
      }
    }
  }

  const AdapterModel& snapshot = state.global_model;
  std::vector<std::optional<FlatVector>> deltas(k);
  auto train_client = [&](std::size_t pos) {
    const auto& shard = state.shards[pos];
    Rng rng(client_round_seed(state.rng_root, shard.client_id, round));
    deltas[pos] = local_train(snapshot, state.client_data[pos], config.local_epochs, config.lr,
                              config.batch_size, rng);
  };

  const std::size_t lanes = std::clamp<std::size_t>(options.lanes, 1, k);
  if (lanes == 1) {
    for (std::size_t pos : order) train_client(pos);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
      std::vector<std::jthread> workers;
      for (std::size_t lane = 0; lane < lanes; ++lane) {
        workers.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < k; i = next.fetch_add(1)) {
            try {
              train_client(order[i]);
            } catch (...) {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!error) error = std::current_exception();
            }
          }
        });
      }
    }
    if (error) std::rethrow_exception(error);
  }

  std::vector<FlatVector> updates;
  std::vector<double> weights;
  RoundRecord record{round, {}, FlatVector::zeros(snapshot.adapter_dim()), 0.0, 0.0,
                     Bsnr::undefined(), policy_name(config.aggregator), std::nullopt};
  updates.reserve(k);
  for (std::size_t pos = 0; pos < k; ++pos) {
    const auto& shard = state.shards[pos];
    const double weight = static_cast<double>(shard.examples.size());
    updates.push_back(*deltas[pos]);
    weights.push_back(weight);
    record.client_updates.push_back({shard.client_id, std::move(*deltas[pos]), shard.affected, weight});
  }

  Rng aggregate_rng(derive_seed(state.rng_root, kAggregateStream, round));
  AggregationResult aggregated = aggregate(config.aggregator, updates, weights, aggregate_rng);
  if (aggregated.accepted) {
    std::vector<int> ids;
    for (std::size_t idx : *aggregated.accepted) ids.push_back(state.shards[idx].client_id);
    record.accepted_clients = std::move(ids);
  }

  AdapterModel next_model = snapshot.apply_update(aggregated.update);
  record.global_update = next_model.flatten_adapter() - snapshot.flatten_adapter();
  state.global_model = std::move(next_model);
  record.ma = state.encoded_eval->main_accuracy(state.global_model);
  record.asr = state.encoded_eval->attack_success_rate(state.global_model);
  if (options.probe) {
    std::vector<FlaggedUpdate> flagged;
    for (const auto& cu : record.client_updates) flagged.push_back({&cu.delta, cu.affected});
    record.bsnr = probe_round(flagged, record.global_update);
  }
  ++state.round_index;
  return record;
}

ExperimentResult continue_experiment(FederationState state, const RoundOptions& options,
                                     const RoundObserver& observer) {
  ExperimentResult result{{},
                          state.encoded_eval->main_accuracy(state.global_model),
                          state.encoded_eval->attack_success_rate(state.global_model),
                          state.global_model,
                          0};
  for (const auto& shard : state.shards) result.affected_clients += shard.affected ? 1 : 0;
  result.records.reserve(state.config.total_rounds - state.round_index);
  while (state.round_index < state.config.total_rounds) {
    result.records.push_back(run_round(state, options));
    if (observer) observer(result.records.back(), state);
  }
  result.final_model = state.global_model;
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RoundOptions& options,
                                const RoundObserver& observer) {
  return continue_experiment(initialize_federation(config), options, observer);
}

void save_federation(std::ostream& out, const FederationState& state) {
  out.write(kFederationMagic, sizeof kFederationMagic);
  const std::string text = format_config(state.config);
  auto put_u64 = [&out](std::uint64_t x) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  };
  put_u64(state.round_index);
  put_u64(text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  save_checkpoint(out, state.global_model);
  if (!out) fail(ErrorCode::kIo, "failed writing federation checkpoint");
}

FederationState load_federation(std::istream& in) {
  char magic[sizeof kFederationMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kFederationMagic, sizeof magic) != 0) {
    fail(ErrorCode::kIo, "not a federation checkpoint");
  }
  auto get_u64 = [&in]() {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorCode::kIo, "truncated federation checkpoint");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return x;
  };
  const std::uint64_t round_index = get_u64();
  const std::uint64_t text_size = get_u64();
  if (text_size > (1u << 20)) fail(ErrorCode::kIo, "implausible config length in checkpoint");
  std::string text(text_size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_size))) {
    fail(ErrorCode::kIo, "truncated federation checkpoint");
  }
  FederationState state = initialize_federation(parse_config(text));
  AdapterModel model = load_checkpoint(in);
  if (model.vocab_size() != state.global_model.vocab_size() ||
      model.n_classes() != state.global_model.n_classes() ||
      model.rank() != state.global_model.rank() || model.base() != state.global_model.base()) {
    fail(ErrorCode::kIo, "checkpoint model does not match its config");
  }
  if (round_index > state.config.total_rounds) fail(ErrorCode::kIo, "checkpoint round out of range");
  state.global_model = std::move(model);
  state.round_index = round_index;
  return state;
}

}  // namespace fitbd
