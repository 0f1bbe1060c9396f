// Shared fixtures for the unit tests.

#pragma once

#include "gprop/graph.hpp"

#include <random>
#include <utility>
#include <vector>

namespace gprop::testing {

inline Matrix dense(const SparseMatrix& m) { return Matrix(m); }

// Erdos-Renyi graph with a spanning path so it is connected.
inline Graph random_graph(int n, double p, std::uint64_t seed, bool connect = true) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<Index, Index>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(i, j);
  if (connect)
    for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return build_graph(n, edges);
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Matrix random_psd(Index d, std::mt19937_64& rng, double scale = 1.0) {
  Matrix a = random_matrix(d, d, rng);
  return scale * a * a.transpose() / static_cast<double>(d);
}

inline Matrix random_symmetric(Index d, std::mt19937_64& rng) {
  Matrix a = random_matrix(d, d, rng);
  return 0.5 * (a + a.transpose());
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double denom = std::max(b.norm(), 1e-300);
  return (a - b).norm() / denom;
}

}  // namespace gprop::testing
