#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fitbd/flat_vector.hpp"

// Backdoor signal analysis of federated updates.
//
// An affected client's update is modelled as a mix of main-task progress, a
// backdoor component pushing along a shared direction, and client noise. The
// mixing weight and the individual components are not observable, so they are
// not estimated here. What is observable is the difference between the mean
// update of affected clients and the mean update of clean clients; its unit
// vector is the estimated backdoor direction. BSNR compares the power of the
// global update along that direction with the power left in its orthogonal
// complement.
namespace fitbd {

// A BSNR measurement. Saturated marks a global update with no residual
// orthogonal to the backdoor direction; Undefined marks rounds where the
// direction cannot be estimated (an empty client group, or identical group
// means).
class Bsnr {
 public:
  enum class Kind { kDefined, kSaturated, kUndefined };

  static Bsnr defined(double value);
  static Bsnr saturated() { return Bsnr(Kind::kSaturated, 0.0); }
  static Bsnr undefined() { return Bsnr(Kind::kUndefined, 0.0); }

  Kind kind() const noexcept { return kind_; }
  bool is_defined() const noexcept { return kind_ == Kind::kDefined; }
  // Only meaningful when is_defined().
  double value() const noexcept { return value_; }

  // "saturated", "undefined", or the value with 17 significant digits.
  std::string to_string() const;
  static Bsnr parse(std::string_view text);

  bool operator==(const Bsnr&) const = default;

 private:
  Bsnr(Kind kind, double value) : kind_(kind), value_(value) {}
  Kind kind_;
  double value_;
};

// normalize(mean(affected) - mean(clean)). Throws kEmptyGroup when either list
// is empty and kZeroDifference when the two means coincide.
FlatVector estimate_direction(std::span<const FlatVector> affected_updates,
                              std::span<const FlatVector> clean_updates);

// ||P(delta)||^2 / ||delta - P(delta)||^2 with P the projection onto direction.
// Zero update gives 0; a residual below kZeroNormEpsilon * ||delta||^2 gives Saturated.
Bsnr compute_bsnr(const FlatVector& direction, const FlatVector& global_update);

struct FlaggedUpdate {
  const FlatVector* update;
  bool affected;
};

Bsnr probe_round(std::span<const FlaggedUpdate> client_updates, const FlatVector& global_update);

// Centered moving average over defined entries; nullopt where a window has no
// defined values.
std::vector<std::optional<double>> moving_average(std::span<const Bsnr> values,
                                                  std::size_t window = 5);

struct TraceSummary {
  double peak_bsnr = 0.0;
  std::size_t peak_round = 0;  // earliest index attaining the peak
  // First round of the nondecreasing moving-average run ending at the peak.
  std::size_t rise_start = 0;
  // Last round of the nonincreasing moving-average run starting at the peak.
  std::size_t decay_end = 0;
  std::size_t saturated_rounds = 0;
  std::size_t undefined_rounds = 0;
};

// Indices are positions in `values` (round r at index r). Saturated entries are
// excluded from the peak with a warning. Throws kAllUndefined when nothing is defined.
TraceSummary summarize_trace(std::span<const Bsnr> values);

struct BsnrTrace {
  double rho = 0.0;
  std::vector<Bsnr> per_round;
  std::optional<TraceSummary> summary;  // nullopt when all rounds are undefined
  std::uint64_t config_fingerprint = 0;
};

// CSV with header "round,bsnr".
void write_trace_csv(std::ostream& out, const BsnrTrace& trace);
// One-line JSON: {"rho":..,"peak_bsnr":..,"peak_round":..,"config_fingerprint":".."}.
std::string trace_summary_json(const BsnrTrace& trace);

}  // namespace fitbd
