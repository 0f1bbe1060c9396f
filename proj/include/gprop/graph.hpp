/*
 * Copyright 2026 The gprop Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "gprop/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gprop {

struct Edge {
  Index u = 0;
  Index v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class LaplacianKind { Combinatorial, SymNormalized, SelfLoopSymNormalized };

inline const char* to_string(LaplacianKind kind) {
  switch (kind) {
    case LaplacianKind::Combinatorial: return "combinatorial";
    case LaplacianKind::SymNormalized: return "sym";
    case LaplacianKind::SelfLoopSymNormalized: return "selfloop_sym";
  }
  return "?";
}

inline LaplacianKind parse_laplacian_kind(const std::string& name) {
  if (name == "combinatorial") return LaplacianKind::Combinatorial;
  if (name == "sym" || name == "sym_normalized") return LaplacianKind::SymNormalized;
  if (name == "selfloop_sym" || name == "selfloop_sym_normalized")
    return LaplacianKind::SelfLoopSymNormalized;
  throw InvalidArgument("unknown laplacian kind '" + name + "'");
}

enum class SelfLoopPolicy { Reject, Strip };
enum class DuplicatePolicy { Merge, Reject };

struct GraphBuildOptions {
  SelfLoopPolicy self_loops = SelfLoopPolicy::Reject;
  DuplicatePolicy duplicates = DuplicatePolicy::Merge;
};

// Immutable simple undirected graph. Edges are stored once as (u, v) with
// u < v, sorted lexicographically; the adjacency matrix holds both
// orientations with unit weight.
class Graph {
 public:
  Graph() = default;

  Index num_nodes() const { return n_; }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const SparseMatrix& adjacency() const { return adjacency_; }
  const Vector& degrees() const { return degrees_; }

  bool has_edge(Index u, Index v) const {
    if (u > v) std::swap(u, v);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{u, v});
  }

  // Edges that are an ordered list of (u,v) with u<v, unique, in-range.
  static Graph from_sorted_edges(Index n, std::vector<Edge> edges) {
    Graph g;
    g.n_ = n;
    g.edges_ = std::move(edges);
    std::vector<Triplet> triplets;
    triplets.reserve(2 * g.edges_.size());
    g.degrees_ = Vector::Zero(n);
    for (const Edge& e : g.edges_) {
      triplets.emplace_back(e.u, e.v, 1.0);
      triplets.emplace_back(e.v, e.u, 1.0);
      g.degrees_[e.u] += 1.0;
      g.degrees_[e.v] += 1.0;
    }
    g.adjacency_.resize(n, n);
    g.adjacency_.setFromTriplets(triplets.begin(), triplets.end());
    g.adjacency_.makeCompressed();
    return g;
  }

 private:
  Index n_ = 0;
  std::vector<Edge> edges_;
  SparseMatrix adjacency_;
  Vector degrees_;
};

inline Graph build_graph(Index n, std::span<const std::pair<Index, Index>> edge_pairs,
                         GraphBuildOptions options = {}) {
  require(n >= 0, "node count must be non-negative");
  std::vector<Edge> edges;
  edges.reserve(edge_pairs.size());
  for (const auto& [a, b] : edge_pairs) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw InvalidArgument("edge (" + std::to_string(a) + "," + std::to_string(b) +
                            "): index out of range for n=" + std::to_string(n));
    }
    if (a == b) {
      if (options.self_loops == SelfLoopPolicy::Strip) continue;
      throw InvalidArgument("self-loop at node " + std::to_string(a));
    }
    edges.push_back(a < b ? Edge{a, b} : Edge{b, a});
  }
  std::sort(edges.begin(), edges.end());
  auto last = std::unique(edges.begin(), edges.end());
  if (last != edges.end() && options.duplicates == DuplicatePolicy::Reject) {
    throw InvalidArgument("duplicate edge (" + std::to_string(last->u) + "," +
                          std::to_string(last->v) + ")");
  }
  edges.erase(last, edges.end());
  return Graph::from_sorted_edges(n, std::move(edges));
}

inline Graph build_graph(Index n, std::initializer_list<std::pair<Index, Index>> edge_pairs,
                         GraphBuildOptions options = {}) {
  std::vector<std::pair<Index, Index>> v(edge_pairs);
  return build_graph(n, std::span<const std::pair<Index, Index>>(v), options);
}

namespace detail {

// Per-node scale s_i such that incidence row k of edge (u,v) is
// (+s_u at u, -s_v at v).
inline Vector incidence_scale(const Graph& g, LaplacianKind kind) {
  const Vector& deg = g.degrees();
  Vector s(g.num_nodes());
  for (Index i = 0; i < g.num_nodes(); ++i) {
    switch (kind) {
      case LaplacianKind::Combinatorial: s[i] = 1.0; break;
      case LaplacianKind::SymNormalized: s[i] = deg[i] > 0 ? 1.0 / std::sqrt(deg[i]) : 0.0; break;
      case LaplacianKind::SelfLoopSymNormalized: s[i] = 1.0 / std::sqrt(deg[i] + 1.0); break;
    }
  }
  return s;
}

}  // namespace detail

// Nonnegative per-edge weights, aligned with Graph::edges().
class EdgeDiagonal {
 public:
  EdgeDiagonal() = default;
  explicit EdgeDiagonal(Vector values) : values_(std::move(values)) {
    for (Index k = 0; k < values_.size(); ++k) {
      if (!(values_[k] >= 0.0)) {
        throw InvalidArgument("edge weight " + std::to_string(k) + " is negative or NaN");
      }
    }
  }
  static EdgeDiagonal ones(Index m) { return EdgeDiagonal(Vector::Ones(m)); }

  Index size() const { return values_.size(); }
  const Vector& values() const { return values_; }
  double operator[](Index k) const { return values_[k]; }

 private:
  Vector values_;
};

// Generalized incidence matrix B~ (m x n) with B~^T B~ equal to the selected
// Laplacian. Edge (u,v), u<v, contributes +s_u at u and -s_v at v.
class IncidenceView {
 public:
  IncidenceView() = default;
  IncidenceView(const Graph& g, LaplacianKind kind)
      : kind_(kind), n_(g.num_nodes()), edges_(g.edges()), scale_(detail::incidence_scale(g, kind)) {
    const Index m = static_cast<Index>(edges_.size());
    std::vector<Triplet> t;
    t.reserve(2 * m);
    for (Index k = 0; k < m; ++k) {
      t.emplace_back(k, edges_[k].u, scale_[edges_[k].u]);
      t.emplace_back(k, edges_[k].v, -scale_[edges_[k].v]);
    }
    matrix_.resize(m, n_);
    matrix_.setFromTriplets(t.begin(), t.end());
    matrix_.makeCompressed();
    transpose_ = matrix_.transpose();
    transpose_.makeCompressed();
  }

  LaplacianKind kind() const { return kind_; }
  Index rows() const { return matrix_.rows(); }
  Index cols() const { return n_; }
  const SparseMatrix& matrix() const { return matrix_; }
  const Vector& scaling() const { return scale_; }
  const std::vector<Edge>& edges() const { return edges_; }

  // B~ Y: one row per edge, the scaled difference of endpoint rows.
  Matrix apply(const Matrix& y) const {
    require(y.rows() == n_, "incidence apply: row count mismatch");
    const Index m = rows();
    Matrix out(m, y.cols());
    for (Index k = 0; k < m; ++k) {
      const Edge& e = edges_[k];
      out.row(k) = scale_[e.u] * y.row(e.u) - scale_[e.v] * y.row(e.v);
    }
    op_counter().edge_flops += static_cast<std::uint64_t>(2 * m * y.cols());
    return out;
  }

  // B~^T Z: scatter each edge row back to its endpoints.
  Matrix apply_transpose(const Matrix& z) const {
    require(z.rows() == rows(), "incidence transpose apply: row count mismatch");
    Matrix out = Matrix::Zero(n_, z.cols());
    for (Index k = 0; k < rows(); ++k) {
      const Edge& e = edges_[k];
      out.row(e.u) += scale_[e.u] * z.row(k);
      out.row(e.v) -= scale_[e.v] * z.row(k);
    }
    op_counter().edge_flops += static_cast<std::uint64_t>(2 * rows() * z.cols());
    return out;
  }

  // B~^T diag(gamma) B~ Y without forming the weighted Laplacian. One fused
  // pass over the edges on a node-major copy of Y, so each endpoint read is a
  // contiguous d-vector and no m x d temporary is built.
  Matrix weighted_laplacian_apply(const Vector& gamma, const Matrix& y) const {
    require(gamma.size() == rows(), "edge weight vector length mismatch");
    require(y.rows() == n_, "incidence apply: row count mismatch");
    const Index d = y.cols();
    const Matrix yt = y.transpose();
    Matrix acc = Matrix::Zero(d, n_);
    for (Index k = 0; k < rows(); ++k) {
      const Edge& e = edges_[k];
      const double su = scale_[e.u], sv = scale_[e.v], g = gamma[k];
      const double* a = yt.col(e.u).data();
      const double* b = yt.col(e.v).data();
      double* ou = acc.col(e.u).data();
      double* ov = acc.col(e.v).data();
      for (Index j = 0; j < d; ++j) {
        const double w = g * (su * a[j] - sv * b[j]);
        ou[j] += su * w;
        ov[j] -= sv * w;
      }
    }
    // difference, weight, scatter: same count as apply + scale + apply_transpose
    op_counter().edge_flops += static_cast<std::uint64_t>(5 * rows() * d);
    return acc.transpose();
  }

  Matrix laplacian_apply(const Matrix& y) const {
    return apply_transpose(apply(y));
  }

  // Dense B~^T diag(gamma) B~ for test-scale checks.
  SparseMatrix weighted_laplacian(const Vector& gamma) const {
    require(gamma.size() == rows(), "edge weight vector length mismatch");
    SparseMatrix l = transpose_ * gamma.asDiagonal() * matrix_;
    l.makeCompressed();
    return l;
  }

 private:
  LaplacianKind kind_ = LaplacianKind::Combinatorial;
  Index n_ = 0;
  std::vector<Edge> edges_;
  Vector scale_;
  SparseMatrix matrix_;
  SparseMatrix transpose_;
};

inline IncidenceView incidence(const Graph& g, LaplacianKind kind) {
  return IncidenceView(g, kind);
}

// L = D - A, I - D^{-1/2} A D^{-1/2}, or I - D~^{-1/2} A~ D~^{-1/2}.
// Isolated nodes have an all-zero row under SymNormalized.
inline SparseMatrix laplacian(const Graph& g, LaplacianKind kind) {
  const Index n = g.num_nodes();
  const Vector s = detail::incidence_scale(g, kind);
  const Vector& deg = g.degrees();
  std::vector<Triplet> t;
  t.reserve(n + 2 * g.edges().size());
  for (Index i = 0; i < n; ++i) {
    double diag = 0.0;
    switch (kind) {
      case LaplacianKind::Combinatorial: diag = deg[i]; break;
      case LaplacianKind::SymNormalized: diag = deg[i] > 0 ? 1.0 : 0.0; break;
      case LaplacianKind::SelfLoopSymNormalized: diag = deg[i] / (deg[i] + 1.0); break;
    }
    if (diag != 0.0) t.emplace_back(i, i, diag);
  }
  for (const Edge& e : g.edges()) {
    const double w = -s[e.u] * s[e.v];
    t.emplace_back(e.u, e.v, w);
    t.emplace_back(e.v, e.u, w);
  }
  SparseMatrix l(n, n);
  l.setFromTriplets(t.begin(), t.end());
  l.makeCompressed();
  return l;
}

// P = I - L~ for the selected kind.
inline SparseMatrix propagation_matrix(const Graph& g, LaplacianKind kind) {
  const Index n = g.num_nodes();
  SparseMatrix identity(n, n);
  identity.setIdentity();
  SparseMatrix p = identity - laplacian(g, kind);
  p.prune(0.0);
  p.makeCompressed();
  return p;
}

struct SpectralNormOptions {
  double tol = 1e-8;
  int max_iters = 10000;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

// Largest singular value of a linear operator given as callables for
// x -> M x and y -> M^T y. Restarted Lanczos on M^T M with full
// reorthogonalization; power iteration stalls when the top eigenvalues nearly
// tie, Lanczos does not.
template <class Apply, class ApplyT>
double operator_norm(Index rows, Index cols, Apply&& apply, ApplyT&& apply_t,
                     const SpectralNormOptions& options = {}) {
  (void)rows;
  if (cols == 0) return 0.0;
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal;
  Vector start(cols);
  for (Index i = 0; i < cols; ++i) start[i] = normal(rng);
  start.normalize();

  const Index basis_cap = std::min<Index>(cols, 48);
  auto gram = [&](const Vector& x) -> Vector { return apply_t(apply(x)); };
  int products = 0;
  while (products < options.max_iters) {
    Matrix q(cols, basis_cap);
    std::vector<double> diag, off;
    q.col(0) = start;
    Index k = 0;
    double theta = 0.0;
    for (; k < basis_cap && products < options.max_iters; ++k) {
      Vector w = gram(q.col(k));
      ++products;
      diag.push_back(q.col(k).dot(w));
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(k + 1) * (q.leftCols(k + 1).transpose() * w);
      const double beta = w.norm();
      Matrix t = Matrix::Zero(k + 1, k + 1);
      for (Index i = 0; i <= k; ++i) t(i, i) = diag[i];
      for (Index i = 0; i < k; ++i) t(i, i + 1) = t(i + 1, i) = off[i];
      Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
      theta = eig.eigenvalues()(k);
      const double residual = beta * std::abs(eig.eigenvectors()(k, k));
      const bool exhausted = beta <= 1e-14 * std::max(theta, 1e-300) || k + 1 == cols;
      if (theta <= 0.0 && exhausted) return 0.0;
      if (exhausted || residual <= options.tol * theta) return std::sqrt(std::max(theta, 0.0));
      if (k + 1 == basis_cap) {
        // Restart from the current top Ritz vector.
        start = (q.leftCols(k + 1) * eig.eigenvectors().col(k)).normalized();
        break;
      }
      off.push_back(beta);
      q.col(k + 1) = w / beta;
    }
  }
  throw NumericalError("spectral norm iteration did not converge within " +
                       std::to_string(options.max_iters) + " operator products");
}

inline double spectral_norm(const SparseMatrix& m, const SpectralNormOptions& options = {}) {
  SparseMatrix mt = m.transpose();
  return operator_norm(
      m.rows(), m.cols(), [&](const Vector& x) -> Vector { return m * x; },
      [&](const Vector& y) -> Vector { return mt * y; }, options);
}

inline double spectral_norm(const Matrix& m, const SpectralNormOptions& options = {}) {
  return operator_norm(
      m.rows(), m.cols(), [&](const Vector& x) -> Vector { return m * x; },
      [&](const Vector& y) -> Vector { return m.transpose() * y; }, options);
}

// Exact 2-norm of a small dense matrix via SVD.
inline double dense_norm2(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double homophily_ratio(const Graph& g, std::span<const int> labels) {
  require(static_cast<Index>(labels.size()) == g.num_nodes(),
          "homophily: label count must equal node count");
  if (g.num_edges() == 0) throw InvalidArgument("homophily ratio undefined for an empty edge set");
  Index same = 0;
  for (const Edge& e : g.edges()) same += labels[e.u] == labels[e.v] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

inline bool is_connected(const Graph& g) {
  const Index n = g.num_nodes();
  if (n <= 1) return true;
  const SparseMatrix& a = g.adjacency();
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index count = 1;
  while (!stack.empty()) {
    Index u = stack.back();
    stack.pop_back();
    for (SparseMatrix::InnerIterator it(a, u); it; ++it) {
      if (!seen[it.col()]) {
        seen[it.col()] = 1;
        ++count;
        stack.push_back(it.col());
      }
    }
  }
  return count == n;
}

// Edge-list text: one "u<TAB>v" pair per line, 0-indexed, '#' comments.
struct EdgeList {
  Index n = 0;
  std::vector<std::pair<Index, Index>> pairs;
};

inline EdgeList read_edge_list(std::istream& in, const std::string& source = "<edges>") {
  EdgeList out;
  std::string line;
  std::size_t lineno = 0;
  Index max_index = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    long long u = 0, v = 0;
    if (!(fields >> u >> v)) throw ParseError(source, lineno, "expected 'u<TAB>v'");
    std::string rest;
    if (fields >> rest) throw ParseError(source, lineno, "trailing content '" + rest + "'");
    if (u < 0 || v < 0) throw ParseError(source, lineno, "negative node index");
    out.pairs.emplace_back(u, v);
    max_index = std::max<Index>(max_index, std::max<Index>(u, v));
  }
  out.n = max_index + 1;
  return out;
}

inline EdgeList read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  return read_edge_list(in, path);
}

inline void write_edge_list(std::ostream& out, const Graph& g) {
  out << "# n=" << g.num_nodes() << " m=" << g.num_edges() << "\n";
  for (const Edge& e : g.edges()) out << e.u << '\t' << e.v << '\n';
}

}  // namespace gprop
