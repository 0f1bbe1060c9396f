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

#include "gprop/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace gprop {

struct Dataset {
  Graph graph;
  Matrix features;  // n x d0
  std::vector<int> labels;
  std::vector<bool> train, val, test;
  int num_classes = 0;
  std::vector<Index> original_ids;  // original id of each row

  Index num_nodes() const { return graph.num_nodes(); }

  static std::vector<Index> rows_of(const std::vector<bool>& mask) {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) rows.push_back(static_cast<Index>(i));
    return rows;
  }
  std::vector<Index> train_rows() const { return rows_of(train); }
  std::vector<Index> val_rows() const { return rows_of(val); }
  std::vector<Index> test_rows() const { return rows_of(test); }

  double homophily() const { return homophily_ratio(graph, labels); }

  void validate() const {
    const auto n = static_cast<std::size_t>(graph.num_nodes());
    if (static_cast<std::size_t>(features.rows()) != n) {
      throw InvalidArgument("dataset: feature rows (" + std::to_string(features.rows()) +
                            ") differ from node count (" + std::to_string(n) + ")");
    }
    require(labels.size() == n, "dataset: one label per node required");
    require(train.size() == n && val.size() == n && test.size() == n, "dataset: masks must have n entries");
    require(original_ids.empty() || original_ids.size() == n, "dataset: index map must have n entries");
    for (std::size_t i = 0; i < n; ++i) {
      if (int(train[i]) + int(val[i]) + int(test[i]) > 1) {
        throw InvalidArgument("dataset: masks overlap at node " + std::to_string(i));
      }
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw InvalidArgument("dataset: label " + std::to_string(labels[i]) + " at node " + std::to_string(i) +
                              " outside [0," + std::to_string(num_classes) + ")");
      }
    }
    require(features.allFinite(), "dataset: features must be finite");
  }
};

// Permutes nodes so training rows come first; original_ids maps back.
inline Dataset reorder_labeled_first(const Dataset& d) {
  const Index n = d.num_nodes();
  std::vector<Index> order;
  order.reserve(n);
  for (Index i = 0; i < n; ++i)
    if (d.train[i]) order.push_back(i);
  for (Index i = 0; i < n; ++i)
    if (!d.train[i]) order.push_back(i);
  std::vector<Index> pos(n);
  for (Index k = 0; k < n; ++k) pos[order[k]] = k;

  Dataset out;
  std::vector<std::pair<Index, Index>> edges;
  for (const Edge& e : d.graph.edges()) edges.emplace_back(pos[e.u], pos[e.v]);
  out.graph = build_graph(n, edges);
  out.features.resize(n, d.features.cols());
  out.labels.resize(n);
  out.train.resize(n);
  out.val.resize(n);
  out.test.resize(n);
  out.original_ids.resize(n);
  for (Index k = 0; k < n; ++k) {
    const Index i = order[k];
    out.features.row(k) = d.features.row(i);
    out.labels[k] = d.labels[i];
    out.train[k] = d.train[i];
    out.val[k] = d.val[i];
    out.test[k] = d.test[i];
    out.original_ids[k] = d.original_ids.empty() ? i : d.original_ids[i];
  }
  out.num_classes = d.num_classes;
  return out;
}

namespace detail {

// Non-comment, non-blank lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> data_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.emplace_back(lineno, line);
  }
  return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_double(const std::string& s, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (s.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line, "not a number: '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (s.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path, line, "not an integer: '" + s + "'");
  }
}

}  // namespace detail

// Dense matrix from comma-separated rows; # comments and blank lines skipped.
inline Matrix read_matrix_csv(const std::string& path) {
  const auto rows = detail::data_lines(path);
  if (rows.empty()) throw ParseError(path, 0, "no rows");
  const auto width = static_cast<Index>(detail::split_csv(rows.front().second).size());
  Matrix m(static_cast<Index>(rows.size()), width);
  for (Index i = 0; i < m.rows(); ++i) {
    const auto cells = detail::split_csv(rows[i].second);
    if (static_cast<Index>(cells.size()) != width) {
      throw ParseError(path, rows[i].first,
                       "expected " + std::to_string(width) + " columns, got " + std::to_string(cells.size()));
    }
    for (Index j = 0; j < width; ++j) m(i, j) = detail::parse_double(cells[j], path, rows[i].first);
  }
  return m;
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out.precision(17);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

// Reads edges.tsv, features.csv, labels.csv and masks.csv from dir. The node
// count is the number of feature rows; edges may leave nodes isolated.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw InvalidArgument("dataset directory '" + dir + "' does not exist");

  Dataset d;
  d.features = read_matrix_csv((root / "features.csv").string());
  const Index n = d.features.rows();

  const std::string epath = (root / "edges.tsv").string();
  const EdgeList el = read_edge_list(epath);
  if (el.n > n) {
    throw ParseError(epath, 0, "edge endpoint " + std::to_string(el.n - 1) + " exceeds node count " +
                                   std::to_string(n));
  }
  d.graph = build_graph(n, el.pairs, {SelfLoopPolicy::Strip, DuplicatePolicy::Merge});

  const std::string lpath = (root / "labels.csv").string();
  const auto lrows = detail::data_lines(lpath);
  if (static_cast<Index>(lrows.size()) != n) {
    throw ParseError(lpath, lrows.empty() ? 0 : lrows.back().first,
                     "expected " + std::to_string(n) + " labels, got " + std::to_string(lrows.size()));
  }
  for (const auto& [line, text] : lrows) {
    const long long y = detail::parse_int(text, lpath, line);
    if (y < 0) throw ParseError(lpath, line, "negative class id");
    d.labels.push_back(static_cast<int>(y));
    d.num_classes = std::max(d.num_classes, static_cast<int>(y) + 1);
  }

  const std::string mpath = (root / "masks.csv").string();
  auto mrows = detail::data_lines(mpath);
  if (!mrows.empty() && mrows.front().second.rfind("train", 0) == 0) mrows.erase(mrows.begin());
  if (static_cast<Index>(mrows.size()) != n) {
    throw ParseError(mpath, mrows.empty() ? 0 : mrows.back().first,
                     "expected " + std::to_string(n) + " mask rows, got " + std::to_string(mrows.size()));
  }
  for (const auto& [line, text] : mrows) {
    const auto cells = detail::split_csv(text);
    if (cells.size() != 3) throw ParseError(mpath, line, "expected three 0/1 columns train,val,test");
    bool bits[3];
    for (int c = 0; c < 3; ++c) {
      const long long b = detail::parse_int(cells[c], mpath, line);
      if (b != 0 && b != 1) throw ParseError(mpath, line, "mask entries must be 0 or 1");
      bits[c] = b == 1;
    }
    if (int(bits[0]) + int(bits[1]) + int(bits[2]) > 1) {
      throw ParseError(mpath, line, "masks overlap (node " + std::to_string(d.train.size()) + ")");
    }
    d.train.push_back(bits[0]);
    d.val.push_back(bits[1]);
    d.test.push_back(bits[2]);
  }
  d.original_ids.resize(n);
  std::iota(d.original_ids.begin(), d.original_ids.end(), Index{0});
  d.validate();
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream out(root / "edges.tsv");
    write_edge_list(out, d.graph);
  }
  {
    std::ofstream out(root / "features.csv");
    write_matrix_csv(out, d.features);
  }
  {
    std::ofstream out(root / "labels.csv");
    for (int y : d.labels) out << y << '\n';
  }
  {
    std::ofstream out(root / "masks.csv");
    out << "train,val,test\n";
    for (std::size_t i = 0; i < d.labels.size(); ++i)
      out << int(d.train[i]) << ',' << int(d.val[i]) << ',' << int(d.test[i]) << '\n';
  }
  if (!fs::exists(root / "edges.tsv")) throw Error("failed to write dataset to '" + dir + "'");
}

struct SplitFractions {
  double train = 0.2;
  double val = 0.2;  // test gets the rest
};

// Stratified random split: per class, the first train-fraction of a shuffled
// order goes to train, the next val-fraction to val, the rest to test.
inline void assign_split(Dataset& d, const SplitFractions& split, std::uint64_t seed) {
  require(split.train >= 0.0 && split.val >= 0.0 && split.train + split.val <= 1.0,
          "split fractions must be non-negative and sum to at most 1");
  const Index n = d.num_nodes();
  d.train.assign(n, false);
  d.val.assign(n, false);
  d.test.assign(n, false);
  std::mt19937_64 rng(seed);
  for (int c = 0; c < d.num_classes; ++c) {
    std::vector<Index> members;
    for (Index i = 0; i < n; ++i)
      if (d.labels[i] == c) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const auto m = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(split.train * m));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(split.val * m)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_train)
        d.train[members[k]] = true;
      else if (k < n_train + n_val)
        d.val[members[k]] = true;
      else
        d.test[members[k]] = true;
    }
  }
}

struct SbmSpec {
  std::vector<Index> blocks{50, 50};
  double p_in = 0.1;
  double p_out = 0.01;
  Index feature_dim = 8;
  double separation = 1.0;  // class means are separation * e_{c mod d0}
  double noise = 1.0;       // per-entry feature standard deviation
  SplitFractions split;
  std::uint64_t seed = 0;

  void validate() const {
    require(!blocks.empty(), "SBM: need at least one block");
    for (Index b : blocks) require(b > 0, "SBM: block sizes must be positive");
    require(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0, "SBM: probabilities must lie in [0,1]");
    require(feature_dim > 0, "SBM: feature_dim must be positive");
    require(noise >= 0.0, "SBM: noise must be non-negative");
  }
};

// Ratio of expected intra-block edges to expected edges.
inline double expected_homophily(const SbmSpec& spec) {
  double intra = 0.0, inter = 0.0, total_nodes = 0.0;
  for (Index b : spec.blocks) {
    const double s = static_cast<double>(b);
    intra += s * (s - 1.0) / 2.0;
    total_nodes += s;
  }
  inter = (total_nodes * (total_nodes - 1.0) / 2.0) - intra;
  const double ein = spec.p_in * intra, eout = spec.p_out * inter;
  require(ein + eout > 0.0, "expected homophily undefined: no edges expected");
  return ein / (ein + eout);
}

namespace detail {

// Visits each index in [0, count) independently with probability p, using
// geometric gaps so sparse blocks cost O(edges) rather than O(pairs).
template <class Visit>
void bernoulli_skip(std::uint64_t count, double p, std::mt19937_64& rng, Visit&& visit) {
  if (p <= 0.0 || count == 0) return;
  if (p >= 1.0) {
    for (std::uint64_t i = 0; i < count; ++i) visit(i);
    return;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double log_q = std::log1p(-p);
  std::uint64_t i = 0;
  while (true) {
    const double r = unif(rng);
    const double gap = std::floor(std::log1p(-r) / log_q);
    if (gap >= static_cast<double>(count - i)) return;
    i += static_cast<std::uint64_t>(gap);
    visit(i);
    if (++i >= count) return;
  }
}

}  // namespace detail

inline Dataset sbm_generate(const SbmSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const Index k = static_cast<Index>(spec.blocks.size());
  std::vector<Index> offset(k + 1, 0);
  for (Index b = 0; b < k; ++b) offset[b + 1] = offset[b] + spec.blocks[b];
  const Index n = offset[k];

  Dataset d;
  d.num_classes = static_cast<int>(k);
  d.labels.resize(n);
  for (Index b = 0; b < k; ++b)
    for (Index i = offset[b]; i < offset[b + 1]; ++i) d.labels[i] = static_cast<int>(b);

  std::vector<std::pair<Index, Index>> edges;
  for (Index a = 0; a < k; ++a) {
    const auto sa = static_cast<std::uint64_t>(spec.blocks[a]);
    // Within block: pairs (i<j) in row-major order of the strict upper triangle.
    detail::bernoulli_skip(sa * (sa - 1) / 2, spec.p_in, rng, [&](std::uint64_t t) {
      // invert t = i*(2s-i-1)/2 + (j-i-1)
      auto i = static_cast<std::uint64_t>(
          std::floor(((2.0 * sa - 1.0) - std::sqrt((2.0 * sa - 1.0) * (2.0 * sa - 1.0) - 8.0 * t)) / 2.0));
      while (i > 0 && i * (2 * sa - i - 1) / 2 > t) --i;
      while ((i + 1) * (2 * sa - i - 2) / 2 <= t) ++i;
      const std::uint64_t j = t - i * (2 * sa - i - 1) / 2 + i + 1;
      edges.emplace_back(offset[a] + static_cast<Index>(i), offset[a] + static_cast<Index>(j));
    });
    for (Index b = a + 1; b < k; ++b) {
      const auto sb = static_cast<std::uint64_t>(spec.blocks[b]);
      detail::bernoulli_skip(sa * sb, spec.p_out, rng, [&](std::uint64_t t) {
        edges.emplace_back(offset[a] + static_cast<Index>(t / sb), offset[b] + static_cast<Index>(t % sb));
      });
    }
  }
  d.graph = build_graph(n, edges);

  std::normal_distribution<double> normal(0.0, spec.noise);
  d.features.resize(n, spec.feature_dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < spec.feature_dim; ++j) d.features(i, j) = normal(rng);
    d.features(i, d.labels[i] % spec.feature_dim) += spec.separation;
  }
  d.original_ids.resize(n);
  std::iota(d.original_ids.begin(), d.original_ids.end(), Index{0});
  assign_split(d, spec.split, spec.seed ^ 0x5bd1e995ULL);
  return d;
}

struct PerturbSpec {
  double rate = 0.2;         // cross-class edges added, as a fraction of |E|
  double remove_rate = 0.0;  // intra-class edges removed, as a fraction of |E|
  std::uint64_t seed = 0;
};

inline Dataset perturb_edges(const Dataset& d, const PerturbSpec& spec) {
  require(spec.rate >= 0.0 && spec.remove_rate >= 0.0, "perturbation rates must be non-negative");
  const Index n = d.num_nodes();
  const Index m = d.graph.num_edges();
  const auto n_add = static_cast<Index>(std::llround(spec.rate * static_cast<double>(m)));
  const auto n_remove = static_cast<Index>(std::llround(spec.remove_rate * static_cast<double>(m)));
  if (n_add == 0 && n_remove == 0) return d;

  std::vector<Index> class_size(d.num_classes, 0);
  for (int y : d.labels) ++class_size[y];
  double cross_pairs = 0.0;
  for (int a = 0; a < d.num_classes; ++a)
    for (int b = a + 1; b < d.num_classes; ++b) cross_pairs += double(class_size[a]) * double(class_size[b]);
  Index cross_edges = 0;
  for (const Edge& e : d.graph.edges()) cross_edges += d.labels[e.u] != d.labels[e.v];
  const double available = cross_pairs - static_cast<double>(cross_edges);
  if (static_cast<double>(n_add) > available) {
    throw InvalidArgument("perturb_edges: need " + std::to_string(n_add) + " cross-class non-edges, only " +
                          std::to_string(static_cast<long long>(available)) + " available");
  }

  std::mt19937_64 rng(spec.seed);
  std::set<std::pair<Index, Index>> edges;
  for (const Edge& e : d.graph.edges()) edges.emplace(e.u, e.v);

  if (n_remove > 0) {
    std::vector<std::pair<Index, Index>> intra;
    for (const auto& e : edges)
      if (d.labels[e.first] == d.labels[e.second]) intra.push_back(e);
    if (static_cast<Index>(intra.size()) < n_remove) {
      throw InvalidArgument("perturb_edges: fewer intra-class edges than requested removals");
    }
    std::shuffle(intra.begin(), intra.end(), rng);
    for (Index k = 0; k < n_remove; ++k) edges.erase(intra[k]);
  }

  if (static_cast<double>(n_add) <= 0.5 * available) {
    std::uniform_int_distribution<Index> pick(0, n - 1);
    Index added = 0;
    while (added < n_add) {
      Index u = pick(rng), v = pick(rng);
      if (d.labels[u] == d.labels[v]) continue;
      if (u > v) std::swap(u, v);
      if (edges.emplace(u, v).second) ++added;
    }
  } else {
    std::vector<std::pair<Index, Index>> candidates;
    for (Index u = 0; u < n; ++u)
      for (Index v = u + 1; v < n; ++v)
        if (d.labels[u] != d.labels[v] && !edges.count({u, v})) candidates.emplace_back(u, v);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (Index k = 0; k < n_add; ++k) edges.insert(candidates[k]);
  }

  Dataset out = d;
  std::vector<std::pair<Index, Index>> list(edges.begin(), edges.end());
  out.graph = build_graph(n, list);
  return out;
}

}  // namespace gprop
