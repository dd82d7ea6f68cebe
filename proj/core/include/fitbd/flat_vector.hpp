#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fitbd {

// Norms at or below this are treated as the zero vector.
inline constexpr double kZeroNormEpsilon = 1e-12;

// Dense parameter/update vector. Dimension is fixed at construction and every
// entry is finite. All reductions run in ascending index order.
class FlatVector {
 public:
  explicit FlatVector(std::vector<double> values);
  FlatVector(std::initializer_list<double> values);

  static FlatVector zeros(std::size_t dim);

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& to_vector() const noexcept { return values_; }

  friend bool operator==(const FlatVector&, const FlatVector&) = default;

 private:
  std::vector<double> values_;
};

void require_same_dim(const FlatVector& a, const FlatVector& b);

FlatVector operator+(const FlatVector& a, const FlatVector& b);
FlatVector operator-(const FlatVector& a, const FlatVector& b);
FlatVector operator*(double c, const FlatVector& v);

double dot(const FlatVector& a, const FlatVector& b);
double squared_norm(const FlatVector& v);
double norm(const FlatVector& v);

// Unit vector along v. Throws kZeroVector when ||v|| <= kZeroNormEpsilon.
FlatVector normalize(const FlatVector& v);

// (v . direction) direction; direction must be unit length within 1e-9.
FlatVector project_onto(const FlatVector& direction, const FlatVector& v);

// Unnormalized DCT-II: X_k = sum_n v_n cos(pi (n + 1/2) k / N).
FlatVector dct_ii(const FlatVector& v);

// M[i][j] = ||vs[i] - vs[j]||^2; symmetric with an exactly zero diagonal.
std::vector<std::vector<double>> pairwise_sq_distances(std::span<const FlatVector> vs);

// Arithmetic mean of a nonempty list, accumulated in list order.
FlatVector mean(std::span<const FlatVector> vs);

}  // namespace fitbd
