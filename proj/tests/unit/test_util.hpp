#pragma once

#include <vector>

#include "fitbd/flat_vector.hpp"
#include "fitbd/random.hpp"

namespace fitbd::test {

inline std::vector<double> random_values(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline FlatVector random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  return FlatVector(random_values(rng, n, scale));
}

}  // namespace fitbd::test
