#include "fitbd/flat_vector.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fitbd/error.hpp"

namespace fitbd {

FlatVector::FlatVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorCode::kInvalidArgument, "FlatVector dimension must be positive");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorCode::kNonFinite, "FlatVector entry " + std::to_string(i) + " is not finite");
    }
  }
}

FlatVector::FlatVector(std::initializer_list<double> values)
    : FlatVector(std::vector<double>(values)) {}

FlatVector FlatVector::zeros(std::size_t dim) { return FlatVector(std::vector<double>(dim, 0.0)); }

void require_same_dim(const FlatVector& a, const FlatVector& b) {
  if (a.dim() != b.dim()) {
    fail(ErrorCode::kDimensionMismatch,
         "dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
}

FlatVector operator+(const FlatVector& a, const FlatVector& b) {
  require_same_dim(a, b);
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return FlatVector(std::move(out));
}

FlatVector operator-(const FlatVector& a, const FlatVector& b) {
  require_same_dim(a, b);
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return FlatVector(std::move(out));
}

FlatVector operator*(double c, const FlatVector& v) {
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * v[i];
  return FlatVector(std::move(out));
}

double dot(const FlatVector& a, const FlatVector& b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const FlatVector& v) {
  double s = 0.0;
  for (double x : v.values()) s += x * x;
  return s;
}

double norm(const FlatVector& v) { return std::sqrt(squared_norm(v)); }

FlatVector normalize(const FlatVector& v) {
  const double n = norm(v);
  if (!(n > kZeroNormEpsilon)) fail(ErrorCode::kZeroVector, "cannot normalize a zero vector");
  std::vector<double> out(v.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] / n;
  return FlatVector(std::move(out));
}

FlatVector project_onto(const FlatVector& direction, const FlatVector& v) {
  require_same_dim(direction, v);
  if (std::abs(norm(direction) - 1.0) > 1e-9) {
    fail(ErrorCode::kInvalidArgument, "projection direction is not unit length");
  }
  return dot(v, direction) * direction;
}

FlatVector dct_ii(const FlatVector& v) {
  const std::size_t n = v.dim();
  // cos(pi (i + 1/2) k / n) = cos(pi m / 2n) with m = (2i + 1) k mod 4n
  const std::size_t period = 4 * n;
  std::vector<double> table(period);
  for (std::size_t m = 0; m < period; ++m) {
    table[m] = std::cos(std::numbers::pi * static_cast<double>(m) / static_cast<double>(2 * n));
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    std::size_t m = k % period;
    const std::size_t stride = (2 * k) % period;
    for (std::size_t i = 0; i < n; ++i) {
      s += v[i] * table[m];
      m += stride;
      if (m >= period) m -= period;
    }
    out[k] = s;
  }
  return FlatVector(std::move(out));
}

std::vector<std::vector<double>> pairwise_sq_distances(std::span<const FlatVector> vs) {
  if (vs.empty()) fail(ErrorCode::kEmptyInput, "pairwise distances need at least one vector");
  for (const auto& v : vs) require_same_dim(vs.front(), v);
  const std::size_t n = vs.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < vs[i].dim(); ++d) {
        const double diff = vs[i][d] - vs[j][d];
        s += diff * diff;
      }
      m[i][j] = s;
      m[j][i] = s;
    }
  }
  return m;
}

FlatVector mean(std::span<const FlatVector> vs) {
  if (vs.empty()) fail(ErrorCode::kEmptyInput, "mean of an empty list");
  std::vector<double> acc(vs.front().dim(), 0.0);
  for (const auto& v : vs) {
    require_same_dim(vs.front(), v);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double count = static_cast<double>(vs.size());
  for (double& x : acc) x /= count;
  return FlatVector(std::move(acc));
}

}  // namespace fitbd
