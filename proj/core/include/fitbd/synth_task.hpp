#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fitbd/random.hpp"

namespace fitbd {

using TokenId = std::uint32_t;

struct VocabShape {
  std::size_t n_classes = 8;
  std::size_t sig_per_class = 5;
  std::size_t n_natural = 2;
  std::size_t n_injected = 4;
  std::size_t n_noise = 50;

  bool operator==(const VocabShape&) const = default;
};

// Token-id space of the synthetic task. The five groups partition
// [0, total_size); ids are assigned to groups by a seeded permutation.
struct Vocab {
  std::size_t total_size = 0;
  std::vector<std::vector<TokenId>> class_signatures;
  // Occur innocently in clean text (the "Firstly" case).
  std::vector<TokenId> natural_trigger_ids;
  // Never produced by clean generation (the Badnets "cf", "mn", "bb", "tq" case).
  std::vector<TokenId> injected_trigger_ids;
  std::vector<TokenId> noise_ids;

  std::size_t n_classes() const noexcept { return class_signatures.size(); }
  bool operator==(const Vocab&) const = default;
};

Vocab build_vocab(const VocabShape& shape, Rng& rng);

struct LabeledExample {
  std::vector<TokenId> tokens;
  int label = 0;
  bool poisoned = false;

  bool operator==(const LabeledExample&) const = default;
};

// Composition of one clean sample.
struct SampleShape {
  std::size_t sig_draws = 4;
  std::size_t noise_draws = 4;
  double p_nat = 0.1;

  // Longest sequence any generation path can produce (clean + one trigger).
  std::size_t max_length() const noexcept { return sig_draws + noise_draws + 2; }

  bool operator==(const SampleShape&) const = default;
};

LabeledExample sample_clean_example(const Vocab& vocab, const SampleShape& shape, Rng& rng);

std::vector<LabeledExample> sample_clean_dataset(const Vocab& vocab, const SampleShape& shape,
                                                 std::size_t count, Rng& rng);

enum class TriggerMode { kNatural, kInjected };

std::string_view to_string(TriggerMode mode);
TriggerMode parse_trigger_mode(std::string_view text);

enum class InsertPosition { kPrepend };

struct TriggerSpec {
  TriggerMode mode = TriggerMode::kInjected;
  std::vector<TokenId> trigger_ids;
  int target_label = 0;
  InsertPosition insert_position = InsertPosition::kPrepend;
};

// Natural mode uses the first natural id only (a single "Firstly"-like word);
// injected mode uses every injected id.
TriggerSpec make_trigger_spec(const Vocab& vocab, TriggerMode mode, int target_label);

// Prepends one trigger id drawn uniformly from spec.trigger_ids and relabels
// to the target. Throws kAlreadyPoisoned for poisoned input.
LabeledExample inject_trigger(const LabeledExample& example, const TriggerSpec& spec, Rng& rng);

bool contains_any(const LabeledExample& example, std::span<const TokenId> ids);

struct ClientShard {
  int client_id = 0;
  std::vector<LabeledExample> examples;
  bool affected = false;
  double realized_pr = 0.0;

  bool operator==(const ClientShard&) const = default;
};

// round-half-up of fraction * n.
std::size_t rounded_count(double fraction, std::size_t n);

// Replaces exactly rounded_count(pr, n) examples, chosen without replacement,
// by their triggered versions. Example order is preserved.
ClientShard poison_shard(ClientShard shard, double pr, const TriggerSpec& spec, Rng& rng);

// Shuffles once and cuts into near-equal contiguous shards; ids are 0..n-1.
std::vector<ClientShard> partition_iid(std::vector<LabeledExample> dataset, std::size_t n_clients,
                                       Rng& rng);

// Flags exactly rounded_count(rho, K) shards, chosen uniformly, as affected.
std::vector<ClientShard> mark_affected(std::vector<ClientShard> shards, double rho, Rng& rng);

// Line format: client_id,affected,label,poisoned,token_ids (space separated),
// preceded by a header line.
void write_dataset(std::ostream& out, std::span<const ClientShard> shards);
std::vector<ClientShard> read_dataset(std::istream& in);

}  // namespace fitbd
