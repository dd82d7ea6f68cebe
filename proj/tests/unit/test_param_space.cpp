#include <cmath>

#include <gtest/gtest.h>

#include "fitbd/error.hpp"
#include "fitbd/flat_vector.hpp"
#include "test_util.hpp"

namespace fitbd {
namespace {

using test::random_vector;

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(FlatVector, RejectsNonFiniteAndEmpty) {
  EXPECT_EQ(code_of([] { FlatVector{1.0, NAN}; }), ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([] { FlatVector{INFINITY}; }), ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([] { FlatVector(std::vector<double>{}); }), ErrorCode::kInvalidArgument);
}

TEST(FlatVector, BinaryOpsCheckDims) {
  EXPECT_EQ(code_of([] { (void)(FlatVector{1.0} + FlatVector{1.0, 2.0}); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([] { (void)dot(FlatVector{1.0}, FlatVector{1.0, 2.0}); }), ErrorCode::kDimensionMismatch);
}

TEST(Normalize, ClosedForm) {
  const FlatVector u = normalize(FlatVector{3.0, 4.0});
  EXPECT_DOUBLE_EQ(u[0], 0.6);
  EXPECT_DOUBLE_EQ(u[1], 0.8);
  EXPECT_EQ(code_of([] { normalize(FlatVector{0.0, 0.0}); }), ErrorCode::kZeroVector);
}

TEST(Normalize, RandomUnitAndParallel) {
  Rng rng(1);
  const FlatVector v = random_vector(rng, 64);
  const FlatVector u = normalize(v);
  double n2 = 0, vu = 0, vv = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    n2 += u[i] * u[i];
    vu += v[i] * u[i];
    vv += v[i] * v[i];
  }
  EXPECT_NEAR(std::sqrt(n2), 1.0, 1e-12);
  EXPECT_NEAR(vu / std::sqrt(vv), 1.0, 1e-12);
  const FlatVector scaled = normalize(7.5 * v);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(scaled[i], u[i], 1e-12);
}

TEST(ProjectOnto, Fixtures) {
  EXPECT_EQ(project_onto(FlatVector{1.0, 0.0}, FlatVector{3.0, 4.0}), (FlatVector{3.0, 0.0}));
  EXPECT_EQ(project_onto(FlatVector{1.0, 0.0}, FlatVector{0.0, 4.0}), (FlatVector{0.0, 0.0}));
  EXPECT_EQ(code_of([] { project_onto(FlatVector{2.0, 0.0}, FlatVector{1.0, 1.0}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { project_onto(FlatVector{1.0, 0.0}, FlatVector{1.0}); }),
            ErrorCode::kDimensionMismatch);
}

TEST(ProjectOnto, BruteForceOrthogonalIdempotent) {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const FlatVector d = normalize(random_vector(rng, 32));
    const FlatVector v = random_vector(rng, 32);
    const FlatVector p = project_onto(d, v);
    double s = 0;
    for (std::size_t i = 0; i < 32; ++i) s += v[i] * d[i];
    for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(p[i], s * d[i], 1e-12);
    EXPECT_NEAR(dot(v - p, d), 0.0, 1e-9);
    const FlatVector pp = project_onto(d, p);
    for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(pp[i], p[i], 1e-12);
    EXPECT_NEAR(squared_norm(p) + squared_norm(v - p), squared_norm(v), 1e-9 * squared_norm(v));
  }
}

TEST(DctII, DcOnlyForConstant) {
  const FlatVector x = dct_ii(FlatVector{1.5, 1.5, 1.5, 1.5});
  EXPECT_NEAR(x[0], 6.0, 1e-12);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(x[k], 0.0, 1e-12);
}

TEST(DctII, ImpulseMatchesNaive) {
  const FlatVector x = dct_ii(FlatVector{1.0, 0.0, 0.0, 0.0});
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(x[k], std::cos(M_PI * 0.5 * k / 4.0), 1e-15);
}

TEST(DctII, LinearityAndZero) {
  Rng rng(3);
  const FlatVector u = random_vector(rng, 17), w = random_vector(rng, 17);
  const FlatVector lhs = dct_ii(2.5 * u + (-0.75) * w);
  const FlatVector rhs = 2.5 * dct_ii(u) + (-0.75) * dct_ii(w);
  for (std::size_t k = 0; k < 17; ++k) EXPECT_NEAR(lhs[k], rhs[k], 1e-9);
  EXPECT_EQ(dct_ii(FlatVector::zeros(9)), FlatVector::zeros(9));
}

TEST(PairwiseSqDistances, Fixtures) {
  const std::vector<FlatVector> tri{FlatVector{0.0, 0.0}, FlatVector{3.0, 4.0}};
  const auto m = pairwise_sq_distances(tri);
  EXPECT_EQ(m, (std::vector<std::vector<double>>{{0.0, 25.0}, {25.0, 0.0}}));
  const std::vector<FlatVector> one{FlatVector{1.0, 2.0}};
  EXPECT_EQ(pairwise_sq_distances(one), (std::vector<std::vector<double>>{{0.0}}));
}

TEST(PairwiseSqDistances, BruteForceSymmetric) {
  Rng rng(4);
  std::vector<FlatVector> vs;
  for (int i = 0; i < 5; ++i) vs.push_back(random_vector(rng, 8));
  const auto m = pairwise_sq_distances(vs);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(m[i][i], 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(m[i][j], m[j][i]);
      double s = 0;
      for (std::size_t d = 0; d < 8; ++d) s += (vs[i][d] - vs[j][d]) * (vs[i][d] - vs[j][d]);
      EXPECT_NEAR(m[i][j], s, 1e-10);
    }
  }
}

}  // namespace
}  // namespace fitbd
