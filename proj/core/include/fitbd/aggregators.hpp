#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fitbd/flat_vector.hpp"
#include "fitbd/random.hpp"

namespace fitbd {

struct FedAvgPolicy {
  bool operator==(const FedAvgPolicy&) const = default;
};

struct KrumPolicy {
  // Assumed byzantine count; unset means floor((n - 1) / 4).
  std::optional<std::size_t> f;
  bool operator==(const KrumPolicy&) const = default;
};

struct MedianPolicy {
  bool operator==(const MedianPolicy&) const = default;
};

struct FreqFedPolicy {
  double low_band_fraction = 0.25;
  bool operator==(const FreqFedPolicy&) const = default;
};

struct FoundationFlPolicy {
  // Unset means one synthetic update per client.
  std::optional<std::size_t> n_synthetic;
  double noise_scale = 0.5;
  bool operator==(const FoundationFlPolicy&) const = default;
};

using AggregatorPolicy =
    std::variant<FedAvgPolicy, KrumPolicy, MedianPolicy, FreqFedPolicy, FoundationFlPolicy>;

// Short name used in telemetry: fedavg, krum, median, freqfed, foundationfl.
std::string policy_name(const AggregatorPolicy& policy);
// Name plus any explicitly set parameters, e.g. "krum:f=2".
std::string policy_label(const AggregatorPolicy& policy);
// Inverse of policy_label; accepts "name" or "name:key=value,key=value".
AggregatorPolicy parse_policy(std::string_view text);
// Throws kInvalidArgument / kInfeasible if the policy cannot run with n clients.
void validate_policy(const AggregatorPolicy& policy, std::size_t n_clients);

std::size_t default_krum_f(std::size_t n) noexcept;

// Sum of terms in ascending value order: independent of input order.
double canonical_sum(std::span<double> terms);

FlatVector fedavg(std::span<const FlatVector> updates, std::span<const double> weights);

struct KrumResult {
  FlatVector selected;
  std::size_t selected_index;
  std::vector<double> scores;
};

// Requires n >= f + 3. Score(i) sums the n - f - 2 smallest squared distances
// from update i to the others; the lowest score wins, ties to the lowest index.
KrumResult krum(std::span<const FlatVector> updates, std::size_t f);

FlatVector coord_median(std::span<const FlatVector> updates);

struct FreqFedResult {
  FlatVector aggregated;
  std::vector<std::size_t> accepted_indices;
  bool fail_open = false;
};

// Two-means over cosine distance of low-band DCT-II fingerprints; the larger
// cluster is averaged without weights. Size ties go to the cluster holding the
// lexicographically smallest update, which keeps the rule order independent.
FreqFedResult freqfed_filter(std::span<const FlatVector> updates, double low_band_fraction,
                             std::uint64_t seed = 0);

// Median of the client updates together with n_synthetic draws of
// median + N(0, (noise_scale * IQR)^2) per coordinate.
FlatVector foundationfl_aggregate(std::span<const FlatVector> updates, std::size_t n_synthetic,
                                  double noise_scale, Rng& rng);

struct AggregationResult {
  FlatVector update;
  // Indices (into the input list) kept by filtering rules; empty optional otherwise.
  std::optional<std::vector<std::size_t>> accepted;
};

AggregationResult aggregate(const AggregatorPolicy& policy, std::span<const FlatVector> updates,
                            std::span<const double> weights, Rng& rng);

}  // namespace fitbd
