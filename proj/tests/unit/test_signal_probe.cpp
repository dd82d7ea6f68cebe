#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "fitbd/error.hpp"
#include "fitbd/signal_probe.hpp"
#include "test_util.hpp"

namespace fitbd {
namespace {

using test::random_vector;

TEST(EstimateDirection, Fixtures) {
  const std::vector<FlatVector> aff{FlatVector{2.0, 0.0}}, clean{FlatVector{0.0, 0.0}};
  EXPECT_EQ(estimate_direction(aff, clean), (FlatVector{1.0, 0.0}));
  try {
    estimate_direction(aff, aff);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroDifference);
  }
  const std::vector<FlatVector> none;
  try {
    estimate_direction(none, clean);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyGroup);
  }
}

TEST(EstimateDirection, MeanDifferenceOracle) {
  Rng rng(21);
  std::vector<FlatVector> aff, clean;
  for (int i = 0; i < 4; ++i) aff.push_back(random_vector(rng, 16));
  for (int i = 0; i < 6; ++i) clean.push_back(random_vector(rng, 16));
  std::vector<double> diff(16, 0.0);
  for (std::size_t d = 0; d < 16; ++d) {
    double a = 0, c = 0;
    for (const auto& v : aff) a += v[d];
    for (const auto& v : clean) c += v[d];
    diff[d] = a / 4.0 - c / 6.0;
  }
  double n = 0;
  for (double x : diff) n += x * x;
  n = std::sqrt(n);
  const FlatVector dir = estimate_direction(aff, clean);
  for (std::size_t d = 0; d < 16; ++d) EXPECT_NEAR(dir[d], diff[d] / n, 1e-12);
}

TEST(ComputeBsnr, Fixtures) {
  const FlatVector e0{1.0, 0.0};
  EXPECT_EQ(compute_bsnr(e0, FlatVector{5.0, 0.0}), Bsnr::saturated());
  EXPECT_EQ(compute_bsnr(e0, FlatVector{0.0, 4.0}).value(), 0.0);
  EXPECT_EQ(compute_bsnr(e0, FlatVector{3.0, 4.0}).value(), 0.5625);
  EXPECT_EQ(compute_bsnr(e0, FlatVector{0.0, 0.0}).value(), 0.0);
}

TEST(ComputeBsnr, ScaleRotationAndSign) {
  Rng rng(22);
  for (int t = 0; t < 10; ++t) {
    const FlatVector dir = normalize(random_vector(rng, 12));
    const FlatVector delta = random_vector(rng, 12);
    const double base = compute_bsnr(dir, delta).value();
    for (double c : {-2.0, 0.5, 10.0}) EXPECT_NEAR(compute_bsnr(dir, c * delta).value(), base, 1e-9);
    EXPECT_NEAR(compute_bsnr(-1.0 * dir, delta).value(), base, 1e-12);
    // Householder reflection H = I - 2 h h^T applied to both vectors
    const FlatVector h = normalize(random_vector(rng, 12));
    auto reflect = [&](const FlatVector& v) { return v - (2.0 * dot(h, v)) * h; };
    EXPECT_NEAR(compute_bsnr(normalize(reflect(dir)), reflect(delta)).value(), base, 1e-9 * std::max(1.0, base));
  }
}

TEST(ComputeBsnr, RisesAsNoiseFalls) {
  Rng rng(23);
  const FlatVector v = random_vector(rng, 32);
  const std::vector<FlatVector> noise_a = [&] {
    std::vector<FlatVector> out;
    for (int i = 0; i < 8; ++i) out.push_back(random_vector(rng, 32));
    return out;
  }();
  double previous = -1.0;
  for (double sigma : {1.0, 0.5, 0.1, 0.01}) {
    std::vector<FlatVector> aff, clean;
    for (int i = 0; i < 4; ++i) aff.push_back(v + sigma * noise_a[i]);
    for (int i = 4; i < 8; ++i) clean.push_back(sigma * noise_a[i]);
    std::vector<FlatVector> all = aff;
    all.insert(all.end(), clean.begin(), clean.end());
    const FlatVector global = mean(all);
    const double b = compute_bsnr(estimate_direction(aff, clean), global).value();
    EXPECT_GT(b, previous) << sigma;
    previous = b;
  }
}

TEST(ProbeRound, Fixtures) {
  const FlatVector a{2.0, 0.0}, c{0.0, 0.0}, g{1.0, 1.0};
  const std::vector<FlaggedUpdate> mixed{{&a, true}, {&a, true}, {&c, false}, {&c, false}};
  EXPECT_EQ(probe_round(mixed, g).value(), 1.0);
  const std::vector<FlaggedUpdate> clean_only{{&c, false}, {&a, false}};
  EXPECT_EQ(probe_round(clean_only, g), Bsnr::undefined());
  const std::vector<FlaggedUpdate> affected_only{{&c, true}, {&a, true}};
  EXPECT_EQ(probe_round(affected_only, g), Bsnr::undefined());
  const std::vector<FlaggedUpdate> same{{&a, true}, {&a, false}};
  EXPECT_EQ(probe_round(same, g), Bsnr::undefined());
}

std::vector<Bsnr> defined(std::initializer_list<double> xs) {
  std::vector<Bsnr> out;
  for (double x : xs) out.push_back(Bsnr::defined(x));
  return out;
}

TEST(SummarizeTrace, Fixtures) {
  const auto peak = summarize_trace(defined({1, 2, 3, 2, 1}));
  EXPECT_EQ(peak.peak_bsnr, 3.0);
  EXPECT_EQ(peak.peak_round, 2u);
  EXPECT_EQ(summarize_trace(defined({4, 4, 4})).peak_round, 0u);
  EXPECT_EQ(summarize_trace(defined({1, 3, 3, 1})).peak_round, 1u);
  const std::vector<Bsnr> none{Bsnr::undefined(), Bsnr::undefined()};
  try {
    summarize_trace(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllUndefined);
  }
}

TEST(SummarizeTrace, SentinelsExcludedFromPeak) {
  std::vector<Bsnr> v = defined({0.5, 2.0, 1.0});
  v.insert(v.begin() + 1, Bsnr::saturated());
  v.push_back(Bsnr::undefined());
  const auto s = summarize_trace(v);
  EXPECT_EQ(s.peak_bsnr, 2.0);
  EXPECT_EQ(s.peak_round, 2u);
  EXPECT_EQ(s.saturated_rounds, 1u);
  EXPECT_EQ(s.undefined_rounds, 1u);
}

TEST(SummarizeTrace, PhaseBoundaries) {
  // smooth hump: moving average rises to the peak and decays after it
  std::vector<double> xs;
  for (int t = 0; t < 40; ++t) xs.push_back(std::exp(-0.5 * (t - 15.0) * (t - 15.0) / 16.0));
  std::vector<Bsnr> v;
  for (double x : xs) v.push_back(Bsnr::defined(x));
  const auto s = summarize_trace(v);
  EXPECT_EQ(s.peak_round, 15u);
  EXPECT_LT(s.rise_start, 5u);
  EXPECT_GT(s.decay_end, 35u);
}

TEST(MovingAverage, CenteredWindow) {
  const auto ma = moving_average(defined({1, 2, 3, 4, 5}), 3);
  EXPECT_DOUBLE_EQ(*ma[0], 1.5);
  EXPECT_DOUBLE_EQ(*ma[2], 3.0);
  EXPECT_DOUBLE_EQ(*ma[4], 4.5);
}

TEST(Bsnr, TextRoundTrip) {
  for (const Bsnr& b : {Bsnr::defined(0.1), Bsnr::defined(1e-300), Bsnr::saturated(), Bsnr::undefined()}) {
    EXPECT_EQ(Bsnr::parse(b.to_string()), b);
  }
  EXPECT_THROW(Bsnr::parse("nan"), Error);
}

TEST(Trace, CsvAndJson) {
  BsnrTrace t{0.5, {Bsnr::defined(0.25), Bsnr::undefined(), Bsnr::saturated()}, std::nullopt, 0xabc};
  t.summary = summarize_trace(t.per_round);
  std::ostringstream csv;
  write_trace_csv(csv, t);
  EXPECT_EQ(csv.str(), "round,bsnr\n0,0.25\n1,undefined\n2,saturated\n");
  EXPECT_EQ(trace_summary_json(t),
            R"({"rho":0.5,"peak_bsnr":0.25,"peak_round":0,"config_fingerprint":"0000000000000abc"})");
}

}  // namespace
}  // namespace fitbd
