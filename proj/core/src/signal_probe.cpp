#include "fitbd/signal_probe.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "fitbd/error.hpp"
#include "fitbd/log.hpp"

namespace fitbd {

Bsnr Bsnr::defined(double value) {
  if (!std::isfinite(value) || value < 0.0) fail(ErrorCode::kInvalidArgument, "BSNR must be finite and >= 0");
  return Bsnr(Kind::kDefined, value);
}

std::string Bsnr::to_string() const {
  switch (kind_) {
    case Kind::kSaturated: return "saturated";
    case Kind::kUndefined: return "undefined";
    case Kind::kDefined: break;
  }
  return fmt::format("{:.17g}", value_);
}

Bsnr Bsnr::parse(std::string_view text) {
  if (text == "saturated") return saturated();
  if (text == "undefined") return undefined();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kParse, "bad BSNR value '" + std::string(text) + "'");
  }
  return defined(v);
}

FlatVector estimate_direction(std::span<const FlatVector> affected_updates,
                              std::span<const FlatVector> clean_updates) {
  if (affected_updates.empty() || clean_updates.empty()) {
    fail(ErrorCode::kEmptyGroup, "backdoor direction needs both affected and clean updates");
  }
  const FlatVector diff = mean(affected_updates) - mean(clean_updates);
  if (!(norm(diff) > kZeroNormEpsilon)) {
    fail(ErrorCode::kZeroDifference, "affected and clean mean updates coincide");
  }
  return normalize(diff);
}

Bsnr compute_bsnr(const FlatVector& direction, const FlatVector& global_update) {
  require_same_dim(direction, global_update);
  const double total = squared_norm(global_update);
  if (total == 0.0) return Bsnr::defined(0.0);
  const FlatVector signal = project_onto(direction, global_update);
  const double signal_power = squared_norm(signal);
  const double noise_power = squared_norm(global_update - signal);
  if (noise_power < kZeroNormEpsilon * total) return Bsnr::saturated();
  return Bsnr::defined(signal_power / noise_power);
}

Bsnr probe_round(std::span<const FlaggedUpdate> client_updates, const FlatVector& global_update) {
  std::vector<FlatVector> affected;
  std::vector<FlatVector> clean;
  for (const auto& cu : client_updates) (cu.affected ? affected : clean).push_back(*cu.update);
  try {
    return compute_bsnr(estimate_direction(affected, clean), global_update);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kEmptyGroup || e.code() == ErrorCode::kZeroDifference) {
      return Bsnr::undefined();
    }
    throw;
  }
}

std::vector<std::optional<double>> moving_average(std::span<const Bsnr> values, std::size_t window) {
  if (window == 0) fail(ErrorCode::kInvalidArgument, "moving-average window must be positive");
  const std::size_t half = window / 2;
  std::vector<std::optional<double>> out(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(values.size() - 1, t + (window - 1 - half));
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (values[i].is_defined()) {
        sum += values[i].value();
        ++count;
      }
    }
    if (count > 0) out[t] = sum / static_cast<double>(count);
  }
  return out;
}

TraceSummary summarize_trace(std::span<const Bsnr> values) {
  TraceSummary s;
  bool found = false;
  for (std::size_t t = 0; t < values.size(); ++t) {
    switch (values[t].kind()) {
      case Bsnr::Kind::kUndefined: ++s.undefined_rounds; break;
      case Bsnr::Kind::kSaturated: ++s.saturated_rounds; break;
      case Bsnr::Kind::kDefined:
        if (!found || values[t].value() > s.peak_bsnr) {
          s.peak_bsnr = values[t].value();
          s.peak_round = t;
          found = true;
        }
        break;
    }
  }
  if (!found) fail(ErrorCode::kAllUndefined, "trace has no defined BSNR values");
  if (s.saturated_rounds > 0) {
    log_warning(fmt::format("{} saturated BSNR round(s) excluded from peak statistics",
                            s.saturated_rounds));
  }
  const auto ma = moving_average(values);
  s.rise_start = s.peak_round;
  while (s.rise_start > 0 && ma[s.rise_start - 1] && ma[s.rise_start] &&
         *ma[s.rise_start - 1] <= *ma[s.rise_start]) {
    --s.rise_start;
  }
  s.decay_end = s.peak_round;
  while (s.decay_end + 1 < values.size() && ma[s.decay_end + 1] && ma[s.decay_end] &&
         *ma[s.decay_end + 1] <= *ma[s.decay_end]) {
    ++s.decay_end;
  }
  return s;
}

void write_trace_csv(std::ostream& out, const BsnrTrace& trace) {
  out << "round,bsnr\n";
  for (std::size_t t = 0; t < trace.per_round.size(); ++t) {
    out << t << ',' << trace.per_round[t].to_string() << '\n';
  }
}

std::string trace_summary_json(const BsnrTrace& trace) {
  if (!trace.summary) {
    return fmt::format(R"({{"rho":{},"peak_bsnr":null,"peak_round":null,"config_fingerprint":"{:016x}"}})",
                       trace.rho, trace.config_fingerprint);
  }
  return fmt::format(
      R"({{"rho":{},"peak_bsnr":{:.17g},"peak_round":{},"config_fingerprint":"{:016x}"}})", trace.rho,
      trace.summary->peak_bsnr, trace.summary->peak_round, trace.config_fingerprint);
}

}  // namespace fitbd
