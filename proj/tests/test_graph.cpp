// Graph construction, Laplacian variants, incidence and spectral estimates.

#include "gprop/graph.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>
#include <sstream>

#include "test_util.hpp"

namespace gprop {
namespace {

using testing::dense;
using testing::random_graph;

TEST(BuildGraph, SingleEdge) {
  Graph g = build_graph(2, {{0, 1}});
  EXPECT_EQ(g.num_nodes(), 2);
  EXPECT_EQ(g.num_edges(), 1);
  EXPECT_DOUBLE_EQ(g.degrees()[0], 1.0);
  EXPECT_DOUBLE_EQ(g.degrees()[1], 1.0);
}

TEST(BuildGraph, DeduplicatesAndSorts) {
  Graph g = build_graph(3, {{1, 2}, {1, 0}, {0, 1}});
  ASSERT_EQ(g.num_edges(), 2);
  EXPECT_EQ(g.edges()[0], (Edge{0, 1}));
  EXPECT_EQ(g.edges()[1], (Edge{1, 2}));
  EXPECT_TRUE(g.has_edge(2, 1));
  EXPECT_FALSE(g.has_edge(0, 2));
}

TEST(BuildGraph, Errors) {
  EXPECT_THROW(build_graph(3, {{0, 3}}), InvalidArgument);
  EXPECT_THROW(build_graph(3, {{-1, 0}}), InvalidArgument);
  EXPECT_THROW(build_graph(3, {{1, 1}}), InvalidArgument);
  GraphBuildOptions strict;
  strict.duplicates = DuplicatePolicy::Reject;
  EXPECT_THROW(build_graph(3, {{0, 1}, {1, 0}}, strict), InvalidArgument);
  GraphBuildOptions strip;
  strip.self_loops = SelfLoopPolicy::Strip;
  EXPECT_EQ(build_graph(3, {{1, 1}, {0, 2}}, strip).num_edges(), 1);
}

TEST(BuildGraph, AdjacencySymmetric) {
  Graph g = random_graph(30, 0.2, 7);
  Matrix a = dense(g.adjacency());
  EXPECT_EQ((a - a.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(a.sum(), 2.0 * g.num_edges());
}

TEST(Laplacian, PathAndTriangle) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix l = dense(laplacian(path, LaplacianKind::Combinatorial));
  Matrix expect(2, 2);
  expect << 1, -1, -1, 1;
  EXPECT_TRUE(l.isApprox(expect));
  EXPECT_TRUE(dense(laplacian(path, LaplacianKind::SymNormalized)).isApprox(expect));

  Graph tri = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  Matrix lt = dense(laplacian(tri, LaplacianKind::Combinatorial));
  Matrix et = Matrix::Constant(3, 3, -1.0);
  et.diagonal().setConstant(2.0);
  EXPECT_TRUE(lt.isApprox(et));
}

TEST(Laplacian, DenseOracleForNormalized) {
  Graph g = random_graph(20, 0.25, 3);
  Matrix a = dense(g.adjacency());
  Vector d = a.rowwise().sum();
  Matrix dinv = Matrix::Zero(20, 20);
  for (int i = 0; i < 20; ++i) dinv(i, i) = d[i] > 0 ? 1.0 / std::sqrt(d[i]) : 0.0;
  Matrix sym = Matrix::Identity(20, 20) - dinv * a * dinv;
  for (int i = 0; i < 20; ++i)
    if (d[i] == 0) sym(i, i) = 0.0;
  EXPECT_LT((dense(laplacian(g, LaplacianKind::SymNormalized)) - sym).cwiseAbs().maxCoeff(), 1e-14);

  Matrix at = a + Matrix::Identity(20, 20);
  Matrix dt = Matrix::Zero(20, 20);
  for (int i = 0; i < 20; ++i) dt(i, i) = 1.0 / std::sqrt(d[i] + 1.0);
  Matrix p = dt * at * dt;
  EXPECT_LT((dense(propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized)) - p).cwiseAbs().maxCoeff(),
            1e-14);
}

TEST(Laplacian, CombinatorialRowsSumToZero) {
  Graph g = random_graph(25, 0.2, 11);
  Vector rows = dense(laplacian(g, LaplacianKind::Combinatorial)).rowwise().sum();
  EXPECT_LT(rows.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Laplacian, SymmetricPsdAcrossKinds) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Graph g = random_graph(8 + static_cast<int>(seed) * 5, 0.15, seed);
    for (auto kind : {LaplacianKind::Combinatorial, LaplacianKind::SymNormalized,
                      LaplacianKind::SelfLoopSymNormalized}) {
      Matrix l = dense(laplacian(g, kind));
      EXPECT_LT((l - l.transpose()).cwiseAbs().maxCoeff(), 1e-15);
      Eigen::SelfAdjointEigenSolver<Matrix> es(l);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(Incidence, PathSignConvention) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix b = dense(incidence(path, LaplacianKind::Combinatorial).matrix());
  ASSERT_EQ(b.rows(), 1);
  EXPECT_DOUBLE_EQ(b(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(b(0, 1), -1.0);
}

TEST(Incidence, GramEqualsLaplacian) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Graph g = random_graph(30, 0.12, seed);
    for (auto kind : {LaplacianKind::Combinatorial, LaplacianKind::SymNormalized,
                      LaplacianKind::SelfLoopSymNormalized}) {
      Matrix b = dense(incidence(g, kind).matrix());
      Matrix l = dense(laplacian(g, kind));
      EXPECT_LT((b.transpose() * b - l).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
    }
  }
}

TEST(Incidence, EmptyEdgeSet) {
  Graph g = build_graph(4, std::initializer_list<std::pair<Index, Index>>{});
  IncidenceView v = incidence(g, LaplacianKind::SymNormalized);
  EXPECT_EQ(v.rows(), 0);
  EXPECT_EQ(dense(v.matrix()).rows(), 0);
  Matrix y = Matrix::Random(4, 2);
  EXPECT_EQ(v.laplacian_apply(y).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Incidence, MatrixFreeApplyMatchesSparse) {
  Graph g = random_graph(25, 0.2, 5);
  IncidenceView v = incidence(g, LaplacianKind::SelfLoopSymNormalized);
  Matrix y = Matrix::Random(25, 3);
  EXPECT_LT((v.apply(y) - v.matrix() * y).cwiseAbs().maxCoeff(), 1e-14);
  Vector gamma = Vector::Random(v.rows()).cwiseAbs();
  Matrix expect = dense(v.weighted_laplacian(gamma)) * y;
  EXPECT_LT((v.weighted_laplacian_apply(gamma, y) - expect).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Propagation, PathSelfLoop) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix p = dense(propagation_matrix(path, LaplacianKind::SelfLoopSymNormalized));
  EXPECT_TRUE(p.isApprox(Matrix::Constant(2, 2, 0.5)));
}

TEST(Propagation, CombinatorialRowSumsOne) {
  Graph g = random_graph(15, 0.3, 2);
  Vector rows = dense(propagation_matrix(g, LaplacianKind::Combinatorial)).rowwise().sum();
  EXPECT_LT((rows - Vector::Ones(15)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Propagation, IsolatedNodeIsIdentityRow) {
  Graph g = build_graph(3, {{0, 1}});
  Matrix p = dense(propagation_matrix(g, LaplacianKind::SymNormalized));
  EXPECT_DOUBLE_EQ(p(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(p(2, 0), 0.0);
  EXPECT_DOUBLE_EQ(p(2, 1), 0.0);
}

TEST(Propagation, PlusLaplacianIsIdentity) {
  Graph g = random_graph(20, 0.2, 9);
  for (auto kind : {LaplacianKind::Combinatorial, LaplacianKind::SymNormalized,
                    LaplacianKind::SelfLoopSymNormalized}) {
    Matrix sum = dense(propagation_matrix(g, kind)) + dense(laplacian(g, kind));
    EXPECT_LT((sum - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(SpectralNorm, SimpleCases) {
  SparseMatrix id(5, 5);
  id.setIdentity();
  EXPECT_NEAR(spectral_norm(id), 1.0, 1e-8);
  SparseMatrix d(2, 2);
  d.insert(0, 0) = 3.0;
  d.insert(1, 1) = 1.0;
  EXPECT_NEAR(spectral_norm(d), 3.0, 3e-8);
}

TEST(SpectralNorm, MatchesDenseSvd) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(0.3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Triplet> t;
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j)
        if (keep(rng)) t.emplace_back(i, j, u(rng));
    SparseMatrix m(20, 20);
    m.setFromTriplets(t.begin(), t.end());
    const double oracle = dense_norm2(dense(m));
    EXPECT_NEAR(spectral_norm(m), oracle, 1e-6 * oracle);
  }
}

TEST(SpectralNorm, Deterministic) {
  Graph g = random_graph(40, 0.1, 4);
  SparseMatrix p = propagation_matrix(g, LaplacianKind::Combinatorial);
  EXPECT_EQ(spectral_norm(p), spectral_norm(p));
}

TEST(SpectralNorm, NormalizedPropagationBounded) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    Graph g = random_graph(40, 0.1, seed);
    EXPECT_LE(spectral_norm(propagation_matrix(g, LaplacianKind::SymNormalized)), 1.0 + 1e-9);
    EXPECT_LE(spectral_norm(propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized)), 1.0 + 1e-9);
  }
}

TEST(Homophily, HandCases) {
  Graph tri = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  std::vector<int> same{0, 0, 0};
  EXPECT_DOUBLE_EQ(homophily_ratio(tri, same), 1.0);
  Graph path = build_graph(3, {{0, 1}, {1, 2}});
  std::vector<int> alt{0, 1, 0};
  EXPECT_DOUBLE_EQ(homophily_ratio(path, alt), 0.0);
  Graph cycle = build_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  std::vector<int> halves{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(homophily_ratio(cycle, halves), 0.5);
}

TEST(Homophily, EmptyAndMismatch) {
  Graph g = build_graph(2, std::initializer_list<std::pair<Index, Index>>{});
  std::vector<int> labels{0, 1};
  EXPECT_THROW(homophily_ratio(g, labels), InvalidArgument);
  Graph path = build_graph(2, {{0, 1}});
  std::vector<int> short_labels{0};
  EXPECT_THROW(homophily_ratio(path, short_labels), InvalidArgument);
}

TEST(Homophily, MatchesBruteForce) {
  Graph g = random_graph(50, 0.1, 13);
  std::mt19937 rng(1);
  std::vector<int> labels(50);
  for (int& l : labels) l = static_cast<int>(rng() % 3);
  Matrix a = dense(g.adjacency());
  double same = 0, total = 0;
  for (int i = 0; i < 50; ++i)
    for (int j = i + 1; j < 50; ++j)
      if (a(i, j) != 0) {
        total += 1;
        same += labels[i] == labels[j];
      }
  double h = homophily_ratio(g, labels);
  EXPECT_DOUBLE_EQ(h, same / total);
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, 1.0);
}

TEST(EdgeListIo, RoundTripAndErrors) {
  Graph g = random_graph(12, 0.3, 8);
  std::stringstream buffer;
  write_edge_list(buffer, g);
  EdgeList parsed = read_edge_list(buffer);
  Graph back = build_graph(g.num_nodes(), parsed.pairs);
  EXPECT_EQ(back.edges(), g.edges());

  std::stringstream bad("# header\n0\t1\n2 x\n");
  try {
    read_edge_list(bad, "bad.tsv");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(EdgeDiagonalTest, RejectsNegative) {
  Vector v(2);
  v << 1.0, -0.1;
  EXPECT_THROW(EdgeDiagonal{v}, InvalidArgument);
  EXPECT_EQ(EdgeDiagonal::ones(3).size(), 3);
}

TEST(Connectivity, Basic) {
  EXPECT_TRUE(is_connected(build_graph(3, {{0, 1}, {1, 2}})));
  EXPECT_FALSE(is_connected(build_graph(3, {{0, 1}})));
}

}  // namespace
}  // namespace gprop
