#pragma once

#include <cstddef>
#include <vector>

namespace mcfo {

// Observed time series x_{1:T}; step t occupies values[t*dim, (t+1)*dim).
struct Sequence {
  std::size_t T = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  const double* at(std::size_t t) const { return values.data() + t * dim; }
};

inline Sequence make_scalar_sequence(std::vector<double> xs) {
  Sequence s;
  s.T = xs.size();
  s.dim = 1;
  s.values = std::move(xs);
  return s;
}

}  // namespace mcfo
