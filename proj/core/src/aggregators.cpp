#include "fitbd/aggregators.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "fitbd/error.hpp"
#include "fitbd/log.hpp"

namespace fitbd {
namespace {

void require_updates(std::span<const FlatVector> updates) {
  if (updates.empty()) fail(ErrorCode::kEmptyInput, "no updates to aggregate");
  for (const auto& u : updates) require_same_dim(updates.front(), u);
}

template <typename... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <typename... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string format_real(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

double parse_real(std::string_view text, std::string_view key) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    fail(ErrorCode::kParse, "bad value for '" + std::string(key) + "': " + std::string(text));
  }
  return value;
}

std::size_t parse_count(std::string_view text, std::string_view key) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    fail(ErrorCode::kParse, "bad count for '" + std::string(key) + "': " + std::string(text));
  }
  return value;
}

// Value at quantile q of sorted data, linear interpolation between order statistics.
double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_sorted(std::span<const double> sorted) {
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

FlatVector unweighted_mean(std::span<const FlatVector> updates, std::span<const std::size_t> members) {
  const std::size_t dim = updates.front().dim();
  const double count = static_cast<double>(members.size());
  std::vector<double> out(dim);
  std::vector<double> terms(members.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < members.size(); ++i) terms[i] = updates[members[i]][d] / count;
    out[d] = canonical_sum(terms);
  }
  return FlatVector(std::move(out));
}

}  // namespace

std::string policy_name(const AggregatorPolicy& policy) {
  return std::visit(Overloaded{[](const FedAvgPolicy&) { return std::string("fedavg"); },
                               [](const KrumPolicy&) { return std::string("krum"); },
                               [](const MedianPolicy&) { return std::string("median"); },
                               [](const FreqFedPolicy&) { return std::string("freqfed"); },
                               [](const FoundationFlPolicy&) { return std::string("foundationfl"); }},
                    policy);
}

std::string policy_label(const AggregatorPolicy& policy) {
  return std::visit(
      Overloaded{[](const FedAvgPolicy&) { return std::string("fedavg"); },
                 [](const KrumPolicy& p) {
                   return p.f ? "krum:f=" + std::to_string(*p.f) : std::string("krum");
                 },
                 [](const MedianPolicy&) { return std::string("median"); },
                 [](const FreqFedPolicy& p) { return "freqfed:band=" + format_real(p.low_band_fraction); },
                 [](const FoundationFlPolicy& p) {
                   std::string s = "foundationfl:";
                   if (p.n_synthetic) s += "synthetic=" + std::to_string(*p.n_synthetic) + ",";
                   return s + "noise=" + format_real(p.noise_scale);
                 }},
      policy);
}

AggregatorPolicy parse_policy(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  std::vector<std::pair<std::string_view, std::string_view>> params;
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorCode::kParse, "aggregator parameter '" + std::string(item) + "' lacks '='");
      }
      params.emplace_back(item.substr(0, eq), item.substr(eq + 1));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  auto unknown = [&](std::string_view key) -> AggregatorPolicy {
    fail(ErrorCode::kParse,
         "unknown parameter '" + std::string(key) + "' for aggregator " + std::string(name));
  };

  if (name == "fedavg" || name == "median") {
    if (!params.empty()) return unknown(params.front().first);
    if (name == "fedavg") return FedAvgPolicy{};
    return MedianPolicy{};
  }
  if (name == "krum") {
    KrumPolicy p;
    for (auto [k, v] : params) {
      if (k == "f") p.f = parse_count(v, k);
      else return unknown(k);
    }
    return p;
  }
  if (name == "freqfed") {
    FreqFedPolicy p;
    for (auto [k, v] : params) {
      if (k == "band") p.low_band_fraction = parse_real(v, k);
      else return unknown(k);
    }
    if (!(p.low_band_fraction > 0.0 && p.low_band_fraction <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "freqfed band must lie in (0, 1]");
    }
    return p;
  }
  if (name == "foundationfl") {
    FoundationFlPolicy p;
    for (auto [k, v] : params) {
      if (k == "synthetic") p.n_synthetic = parse_count(v, k);
      else if (k == "noise") p.noise_scale = parse_real(v, k);
      else return unknown(k);
    }
    if (p.noise_scale < 0.0) fail(ErrorCode::kInvalidArgument, "foundationfl noise must be >= 0");
    return p;
  }
  fail(ErrorCode::kParse, "unknown aggregator '" + std::string(name) + "'");
}

std::size_t default_krum_f(std::size_t n) noexcept { return n == 0 ? 0 : (n - 1) / 4; }

void validate_policy(const AggregatorPolicy& policy, std::size_t n_clients) {
  if (const auto* krum_policy = std::get_if<KrumPolicy>(&policy)) {
    const std::size_t f = krum_policy->f.value_or(default_krum_f(n_clients));
    if (2 * f + 2 >= n_clients) {
      fail(ErrorCode::kInfeasible, "krum with f=" + std::to_string(f) + " needs more than " +
                                       std::to_string(2 * f + 2) + " clients, have " +
                                       std::to_string(n_clients));
    }
  } else if (const auto* ff = std::get_if<FreqFedPolicy>(&policy)) {
    if (!(ff->low_band_fraction > 0.0 && ff->low_band_fraction <= 1.0)) {
      fail(ErrorCode::kInvalidArgument, "freqfed band must lie in (0, 1]");
    }
  } else if (const auto* fl = std::get_if<FoundationFlPolicy>(&policy)) {
    if (!(fl->noise_scale >= 0.0)) fail(ErrorCode::kInvalidArgument, "foundationfl noise must be >= 0");
  }
}

double canonical_sum(std::span<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

FlatVector fedavg(std::span<const FlatVector> updates, std::span<const double> weights) {
  require_updates(updates);
  if (weights.size() != updates.size()) {
    fail(ErrorCode::kDimensionMismatch, "weights and updates differ in length");
  }
  std::vector<double> w(weights.begin(), weights.end());
  for (double x : w) {
    if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorCode::kInvalidArgument, "weights must be positive");
  }
  const double total = canonical_sum(std::span<double>(w));
  std::vector<double> share(weights.size());
  for (std::size_t i = 0; i < share.size(); ++i) share[i] = weights[i] / total;

  const std::size_t dim = updates.front().dim();
  std::vector<double> out(dim);
  std::vector<double> terms(updates.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < updates.size(); ++i) terms[i] = share[i] * updates[i][d];
    out[d] = canonical_sum(terms);
  }
  return FlatVector(std::move(out));
}

KrumResult krum(std::span<const FlatVector> updates, std::size_t f) {
  require_updates(updates);
  const std::size_t n = updates.size();
  if (n < f + 3) {
    fail(ErrorCode::kInfeasible, "krum needs n >= f + 3 (n=" + std::to_string(n) +
                                     ", f=" + std::to_string(f) + ")");
  }
  const std::size_t neighbours = n - f - 2;
  const auto dist = pairwise_sq_distances(updates);
  std::vector<double> scores(n);
  std::vector<double> row;
  for (std::size_t i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row.push_back(dist[i][j]);
    }
    std::sort(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t k = 0; k < neighbours; ++k) s += row[k];
    scores[i] = s;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (scores[i] < scores[best]) best = i;
  }
  return {updates[best], best, std::move(scores)};
}

FlatVector coord_median(std::span<const FlatVector> updates) {
  require_updates(updates);
  const std::size_t dim = updates.front().dim();
  std::vector<double> out(dim);
  std::vector<double> column(updates.size());
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < updates.size(); ++i) column[i] = updates[i][d];
    std::sort(column.begin(), column.end());
    out[d] = median_sorted(column);
  }
  return FlatVector(std::move(out));
}

namespace {

struct TwoMeans {
  std::vector<int> assignment;  // 0 or 1 per point
  bool degenerate = true;
};

double cosine_distance(std::span<const double> a, std::span<const double> b, bool a_zero,
                       bool b_zero) {
  if (a_zero || b_zero) return (a_zero && b_zero) ? 0.0 : 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return 1.0 - s;
}

// Spherical two-means on unit (or zero) fingerprints starting from points i0, i1.
TwoMeans two_means(const std::vector<std::vector<double>>& units, const std::vector<bool>& is_zero,
                   std::size_t i0, std::size_t i1) {
  constexpr int kIterations = 20;
  const std::size_t n = units.size();
  const std::size_t m = units.front().size();
  std::vector<std::vector<double>> centroid = {units[i0], units[i1]};
  bool centroid_zero[2] = {is_zero[i0], is_zero[i1]};
  TwoMeans result;
  result.assignment.assign(n, -1);
  std::vector<double> terms;
  for (int iter = 0; iter < kIterations; ++iter) {
    bool changed = false;
    std::size_t sizes[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const double d0 = cosine_distance(units[i], centroid[0], is_zero[i], centroid_zero[0]);
      const double d1 = cosine_distance(units[i], centroid[1], is_zero[i], centroid_zero[1]);
      const int c = d1 < d0 ? 1 : 0;
      if (result.assignment[i] != c) changed = true;
      result.assignment[i] = c;
      ++sizes[c];
    }
    if (sizes[0] == 0 || sizes[1] == 0) return result;  // degenerate
    if (!changed && iter > 0) break;
    for (int c = 0; c < 2; ++c) {
      std::vector<double> sum(m);
      for (std::size_t d = 0; d < m; ++d) {
        terms.clear();
        for (std::size_t i = 0; i < n; ++i) {
          if (result.assignment[i] == c) terms.push_back(units[i][d]);
        }
        sum[d] = canonical_sum(terms);
      }
      double nrm = 0.0;
      for (double x : sum) nrm += x * x;
      nrm = std::sqrt(nrm);
      centroid_zero[c] = !(nrm > kZeroNormEpsilon);
      if (!centroid_zero[c]) {
        for (double& x : sum) x /= nrm;
      }
      centroid[c] = std::move(sum);
    }
  }
  result.degenerate = false;
  return result;
}

}  // namespace

namespace {

// Clustering on updates already in canonical order.
FreqFedResult freqfed_canonical(std::span<const FlatVector> updates, double low_band_fraction,
                                std::uint64_t seed) {
  if (!(low_band_fraction > 0.0 && low_band_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "low_band_fraction must lie in (0, 1]");
  }
  const std::size_t n = updates.size();
  const std::size_t dim = updates.front().dim();
  const std::size_t band = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(low_band_fraction * static_cast<double>(dim) - 1e-9)),
      std::size_t{1}, dim);

  std::vector<std::vector<double>> units(n);
  std::vector<bool> is_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FlatVector coeffs = dct_ii(updates[i]);
    std::vector<double> fp(coeffs.values().begin(), coeffs.values().begin() + static_cast<std::ptrdiff_t>(band));
    double nrm = 0.0;
    for (double x : fp) nrm += x * x;
    nrm = std::sqrt(nrm);
    is_zero[i] = !(nrm > kZeroNormEpsilon);
    if (!is_zero[i]) {
      for (double& x : fp) x /= nrm;
    } else {
      std::fill(fp.begin(), fp.end(), 0.0);
    }
    units[i] = std::move(fp);
  }

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  auto accept_all = [&](std::string_view why) {
    log_warning(std::string("freqfed: ") + std::string(why) + "; accepting all updates");
    return FreqFedResult{unweighted_mean(updates, all), all, true};
  };
  if (n < 2) return FreqFedResult{updates.front(), {0}, false};

  // Farthest pair under cosine distance; first maximal pair in index order.
  std::size_t fi = 0, fj = 1;
  double farthest = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = cosine_distance(units[i], units[j], is_zero[i], is_zero[j]);
      if (d > farthest) {
        farthest = d;
        fi = i;
        fj = j;
      }
    }
  }
  constexpr double kSeparation = 1e-12;
  TwoMeans clusters;
  if (farthest > kSeparation) clusters = two_means(units, is_zero, fi, fj);
  if (clusters.degenerate) {
    Rng rng(derive_seed(seed, 0x46726571u));
    const std::size_t a = rng.below(n);
    std::size_t b = rng.below(n - 1);
    if (b >= a) ++b;
    if (cosine_distance(units[a], units[b], is_zero[a], is_zero[b]) > kSeparation) {
      clusters = two_means(units, is_zero, a, b);
    }
    if (clusters.degenerate) return accept_all("two-means degenerate after reseed");
  }

  std::size_t size1 = 0;
  for (int c : clusters.assignment) size1 += c == 1 ? 1 : 0;
  const std::size_t size0 = n - size1;
  int winner = clusters.assignment[0];
  if (size0 > size1) winner = 0;
  else if (size1 > size0) winner = 1;

  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < n; ++i) {
    if (clusters.assignment[i] == winner) accepted.push_back(i);
  }
  return FreqFedResult{unweighted_mean(updates, accepted), std::move(accepted), false};
}

}  // namespace

// The size-tie rule and the reseed draw refer to positions, so clustering runs
// on a lexicographic ordering of the updates and maps indices back; the result
// does not depend on input order.
FreqFedResult freqfed_filter(std::span<const FlatVector> updates, double low_band_fraction,
                             std::uint64_t seed) {
  require_updates(updates);
  std::vector<std::size_t> order(updates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto x = updates[a].values(), y = updates[b].values();
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  });
  std::vector<FlatVector> canonical;
  canonical.reserve(updates.size());
  for (std::size_t i : order) canonical.push_back(updates[i]);
  FreqFedResult result = freqfed_canonical(canonical, low_band_fraction, seed);
  for (std::size_t& idx : result.accepted_indices) idx = order[idx];
  std::sort(result.accepted_indices.begin(), result.accepted_indices.end());
  return result;
}

FlatVector foundationfl_aggregate(std::span<const FlatVector> updates, std::size_t n_synthetic,
                                  double noise_scale, Rng& rng) {
  require_updates(updates);
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    fail(ErrorCode::kInvalidArgument, "noise_scale must be finite and >= 0");
  }
  const std::size_t n = updates.size();
  const std::size_t dim = updates.front().dim();
  std::vector<double> center(dim);
  std::vector<double> spread(dim);
  std::vector<double> column(n);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][d];
    std::sort(column.begin(), column.end());
    center[d] = median_sorted(column);
    spread[d] = noise_scale * (quantile_sorted(column, 0.75) - quantile_sorted(column, 0.25));
  }
  std::vector<std::vector<double>> synthetic(n_synthetic, std::vector<double>(dim));
  for (auto& s : synthetic) {
    for (std::size_t d = 0; d < dim; ++d) s[d] = center[d] + spread[d] * rng.normal();
  }
  std::vector<double> out(dim);
  std::vector<double> pooled(n + n_synthetic);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t i = 0; i < n; ++i) pooled[i] = updates[i][d];
    for (std::size_t j = 0; j < n_synthetic; ++j) pooled[n + j] = synthetic[j][d];
    std::sort(pooled.begin(), pooled.end());
    out[d] = median_sorted(pooled);
  }
  return FlatVector(std::move(out));
}

AggregationResult aggregate(const AggregatorPolicy& policy, std::span<const FlatVector> updates,
                            std::span<const double> weights, Rng& rng) {
  require_updates(updates);
  validate_policy(policy, updates.size());
  return std::visit(
      Overloaded{
          [&](const FedAvgPolicy&) { return AggregationResult{fedavg(updates, weights), std::nullopt}; },
          [&](const KrumPolicy& p) {
            auto r = krum(updates, p.f.value_or(default_krum_f(updates.size())));
            return AggregationResult{std::move(r.selected),
                                     std::vector<std::size_t>{r.selected_index}};
          },
          [&](const MedianPolicy&) { return AggregationResult{coord_median(updates), std::nullopt}; },
          [&](const FreqFedPolicy& p) {
            auto r = freqfed_filter(updates, p.low_band_fraction, rng.next_u64());
            return AggregationResult{std::move(r.aggregated), std::move(r.accepted_indices)};
          },
          [&](const FoundationFlPolicy& p) {
            return AggregationResult{
                foundationfl_aggregate(updates, p.n_synthetic.value_or(updates.size()),
                                       p.noise_scale, rng),
                std::nullopt};
          }},
      policy);
}

}  // namespace fitbd
