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

#include "gprop/equivalence.hpp"
#include "gprop/model.hpp"

#include <chrono>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace gprop {

// One self-generated instance of a property check. Seed plus name is enough
// to replay it.
struct CaseResult {
  std::string suite;
  std::string name;
  std::uint64_t seed = 0;
  bool pass = true;
  std::map<std::string, double> metrics;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CaseResult> cases;
  double seconds = 0.0;

  bool pass() const {
    for (const CaseResult& c : cases)
      if (!c.pass) return false;
    return true;
  }
  const CaseResult* first_failure() const {
    for (const CaseResult& c : cases)
      if (!c.pass) return &c;
    return nullptr;
  }
  std::size_t failures() const {
    std::size_t n = 0;
    for (const CaseResult& c : cases) n += c.pass ? 0 : 1;
    return n;
  }
  // Largest value of a metric over the cases that report it.
  double max_metric(const std::string& key) const {
    double m = 0.0;
    for (const CaseResult& c : cases)
      if (auto it = c.metrics.find(key); it != c.metrics.end()) m = std::max(m, it->second);
    return m;
  }
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  int instances = -1;           // per check, -1 for the default count
  bool inject_failure = false;  // corrupt the first case (negative control)
};

inline const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"descent", "convergence", "equivalence", "gradients"};
  return names;
}

namespace detail {

inline Graph verify_graph(Index n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (coin(rng)) pairs.emplace_back(i, j);
  for (Index i = 0; i + 1 < n; ++i) pairs.emplace_back(i, i + 1);  // keep it connected
  return build_graph(n, pairs);
}

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Matrix random_psd_matrix(Index d, std::mt19937_64& rng) {
  const Matrix a = gaussian(d, d, rng);
  return a * a.transpose() / static_cast<double>(d);
}

inline int count_or(const VerifyOptions& o, int fallback) { return o.instances > 0 ? o.instances : fallback; }

inline CaseResult make_case(const std::string& suite, const std::string& name, std::uint64_t seed) {
  CaseResult c;
  c.suite = suite;
  c.name = name;
  c.seed = seed;
  return c;
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Concave rho menu for descent checks. The cosine-derived variant is left out:
// its quadratic bound holds only for unit-norm rows.
inline const std::vector<RhoFunction>& descent_rho_menu() {
  static const std::vector<RhoFunction> menu{RhoFunction::identity(), RhoFunction::log(0.5),
                                             RhoFunction::truncated_quadratic(1.0),
                                             RhoFunction::truncated_lp(0.1, 0.2, 2.0),
                                             RhoFunction::truncated_lp(1.0, 0.3, 1.5), RhoFunction::absolute()};
  return menu;
}

}  // namespace detail

// General-mode energies with PSD weights, concave rho and phi in {zero, relu}:
// the energy trace must not increase (per-step Gamma refresh). Then simple-mode
// reweighting with the step size bounded by the current Gamma.
inline SuiteReport verify_descent_suite(const VerifyOptions& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"descent", {}, 0.0};
  const auto& menu = detail::descent_rho_menu();
  const int general = detail::count_or(o, 100), irls = detail::count_or(o, 50);
  for (int i = 0; i < general; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index n = 6 + static_cast<Index>(rng() % 15), d = 1 + static_cast<Index>(rng() % 4);
    const Graph g = detail::verify_graph(n, 0.3, seed);
    const RhoFunction rho = menu[static_cast<std::size_t>(i) % menu.size()];
    const PhiFunction phi = (i / static_cast<int>(menu.size())) % 2 ? PhiFunction::relu() : PhiFunction::zero();
    const EnergySpec spec = EnergySpec::general(detail::random_psd_matrix(d, rng), detail::random_psd_matrix(d, rng),
                                                LaplacianKind::Combinatorial, rho, phi);
    PropagationConfig cfg;
    cfg.steps = 30;
    cfg.attention_schedule = PropagationConfig::every_step(cfg.steps);
    if (o.inject_failure && i == 0) {
      cfg.alpha = 10.0 * step_size_bound(spec, g, d).general;
      cfg.divergence_limit = 1e300;
    }
    CaseResult c = detail::make_case("descent", "general", seed);
    c.detail = "rho=" + to_string(rho) + " phi=" + to_string(phi) + " n=" + std::to_string(n) +
               " d=" + std::to_string(d);
    const Matrix fx = detail::gaussian(n, d, rng);
    const DescentReport dr = verify_descent(propagate(spec, g, fx, cfg));
    c.pass = dr.pass;
    c.metrics["first_violation"] = dr.first_violation;
    c.metrics["increase"] = dr.increase;
    rep.cases.push_back(std::move(c));
  }
  for (int i = 0; i < irls; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + 500000ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index n = 10 + static_cast<Index>(rng() % 20), d = 1 + static_cast<Index>(rng() % 4);
    const Graph g = detail::verify_graph(n, 0.2, seed);
    const RhoFunction rho = menu[1 + static_cast<std::size_t>(i) % (menu.size() - 1)];
    const EnergySpec spec = EnergySpec::simple(0.5 + static_cast<double>(rng() % 40) / 10.0,
                                               LaplacianKind::Combinatorial, rho);
    PropagationConfig cfg;
    cfg.steps = 40;
    cfg.attention_schedule = PropagationConfig::every_step(cfg.steps);
    CaseResult c = detail::make_case("descent", "irls", seed);
    c.detail = "rho=" + to_string(rho) + " lambda=" + detail::fmt(spec.lambda);
    const PropagationResult r = propagate(spec, g, detail::gaussian(n, d, rng), cfg);
    const DescentReport dr = verify_descent(r);
    c.pass = dr.pass && r.gamma_trace.size() == static_cast<std::size_t>(cfg.steps);
    c.metrics["first_violation"] = dr.first_violation;
    c.metrics["increase"] = dr.increase;
    rep.cases.push_back(std::move(c));
  }
  rep.seconds = detail::elapsed(t0);
  return rep;
}

struct ClosedFormCheck {
  double rel_error = 0.0;
  double seconds = 0.0;
};

// 50-node random graph, d = 8, lambda = 1, identity rho, zero phi, automatic
// step size: K steps against the sparse direct solve.
inline ClosedFormCheck closed_form_check(std::uint64_t seed, int steps = 500) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  const Graph g = detail::verify_graph(50, 0.1, seed);
  const Matrix fx = detail::gaussian(50, 8, rng);
  const EnergySpec spec = EnergySpec::simple(1.0);
  PropagationConfig cfg;
  cfg.steps = steps;
  cfg.track_energy = false;
  const Matrix y = propagate(spec, g, fx, cfg).y_final;
  const Matrix exact = closed_form_solution(g, fx, 1.0, LaplacianKind::Combinatorial);
  return {(y - exact).norm() / exact.norm(), detail::elapsed(t0)};
}

// Closed-form convergence of the simple energy, then uniqueness and geometric
// convergence of the contractive fixed point.
inline SuiteReport verify_convergence_suite(const VerifyOptions& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"convergence", {}, 0.0};
  const int count = detail::count_or(o, 10);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const ClosedFormCheck cf = closed_form_check(seed, o.inject_failure && i == 0 ? 5 : 500);
    CaseResult c = detail::make_case("convergence", "closed-form", seed);
    c.pass = cf.rel_error < 1e-6;
    c.metrics["rel_error"] = cf.rel_error;
    c.metrics["seconds"] = cf.seconds;
    rep.cases.push_back(std::move(c));
  }
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + 700000ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index n = 10 + static_cast<Index>(rng() % 20), d = 1 + static_cast<Index>(rng() % 4);
    const Graph g = detail::verify_graph(n, 0.25, seed);
    const SparseMatrix p = propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized);
    const double p_norm = spectral_norm(p);
    const Matrix w = project_weights(detail::gaussian(d, d, rng), p_norm, 0.9);
    const Matrix fx = detail::gaussian(n, d, rng);
    FixedPointConfig a;
    a.activation = i % 2 ? PhiFunction::relu() : PhiFunction::zero();
    a.tol = 1e-11;
    FixedPointConfig b = a;
    a.initial = detail::gaussian(n, d, rng, 5.0);
    b.initial = detail::gaussian(n, d, rng, 5.0);
    const FixedPointResult ra = fixed_point_solve(p, w, fx, a, p_norm);
    const FixedPointResult rb = fixed_point_solve(p, w, fx, b, p_norm);
    CaseResult c = detail::make_case("convergence", "fixed-point", seed);
    const double gap = (ra.y_star - rb.y_star).norm();
    c.metrics["gap"] = gap;
    c.metrics["contraction_estimate"] = ra.contraction_estimate;
    c.metrics["contraction_bound"] = ra.contraction_bound;
    c.pass = gap < 1e-7 && ra.certified && ra.contraction_estimate <= ra.contraction_bound + 1e-6 &&
             ra.contraction_estimate < 1.0;
    rep.cases.push_back(std::move(c));
  }
  rep.seconds = detail::elapsed(t0);
  return rep;
}

// Unfolded fixed point against IGNN, the symmetric reparameterization of
// asymmetric weights, and the GCN block embedding.
inline SuiteReport verify_equivalence_suite(const VerifyOptions& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"equivalence", {}, 0.0};
  const int ugnn = detail::count_or(o, 20), sym = detail::count_or(o, 50), gcn = detail::count_or(o, 8);
  for (int i = 0; i < ugnn; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index n = 8 + static_cast<Index>(rng() % 12), d = 1 + static_cast<Index>(rng() % 4);
    const Graph g = detail::verify_graph(n, 0.2, seed);
    const SparseMatrix p = propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized);
    const Matrix a = detail::gaussian(d, d, rng);
    Matrix wps = 0.5 * (a + a.transpose());
    wps *= 0.8 / (dense_norm2(wps) * spectral_norm(p));
    const Matrix fx = detail::gaussian(n, d, rng);
    const PhiFunction act = i % 2 ? PhiFunction::relu() : PhiFunction::zero();
    const EnergySpec spec = EnergySpec::general(0.5 * (Matrix::Identity(d, d) - wps), 0.5 * wps,
                                                LaplacianKind::SelfLoopSymNormalized, {}, act);
    PropagationConfig cfg;
    cfg.steps = 400;
    cfg.alpha = 1.0;
    cfg.track_energy = false;
    cfg.mode = GradientMode::Literal;
    FixedPointConfig fp;
    fp.activation = act;
    fp.tol = 1e-12;
    const Matrix y_unfold = propagate(spec, g, fx, cfg).y_final;
    Matrix y_ignn = fixed_point_solve(p, wps, fx, fp).y_star;
    if (o.inject_failure && i == 0) y_ignn(0, 0) += 1e-3;
    CaseResult c = detail::make_case("equivalence", "ugnn-ignn", seed);
    c.metrics["max_diff"] = (y_unfold - y_ignn).cwiseAbs().maxCoeff();
    c.pass = c.metrics["max_diff"] < 1e-6;
    rep.cases.push_back(std::move(c));
  }
  for (int i = 0; i < sym; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + 300000ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index d = 2 + static_cast<Index>(rng() % 5), dx = 1 + static_cast<Index>(rng() % 4), n = 12;
    const Graph g = detail::verify_graph(n, 0.3, seed);
    Matrix w = detail::gaussian(d, d, rng);
    if (i % 5 == 4) {
      // Defective: a 2x2 Jordan block in a random basis forces the jitter path.
      Matrix j = Matrix::Zero(d, d);
      for (Index k = 0; k < d; ++k) j(k, k) = 0.15 * static_cast<double>(k) - 0.3;
      j(1, 1) = j(0, 0);
      j(0, 1) = 1.0;
      const Matrix q = Matrix::Identity(d, d) + 0.3 * detail::gaussian(d, d, rng);
      w = q * j * q.inverse();
    }
    w *= 0.8 / dense_norm2(w);
    const Matrix wx = detail::gaussian(dx, d, rng), x = detail::gaussian(n, dx, rng);
    CaseResult c = detail::make_case("equivalence", "symmetrize", seed);
    double worst_residual = 0.0;
    std::vector<double> drift;
    for (double eps : {1e-2, 1e-4, 1e-6}) {
      const LinearEquivalenceReport r = verify_linear_equivalence(symmetrize_linear(w, wx, eps), g, x);
      worst_residual = std::max(worst_residual, r.residual);
      drift.push_back(r.drift);
    }
    bool monotone = true;
    const double noise = 1e-11;  // 10x the solver tolerance scale
    for (std::size_t k = 0; k + 1 < drift.size(); ++k) monotone = monotone && drift[k + 1] <= drift[k] + 10.0 * noise;
    c.metrics["residual"] = worst_residual;
    c.metrics["drift_1e-2"] = drift[0];
    c.metrics["drift_1e-6"] = drift[2];
    c.pass = worst_residual < 1e-6 && monotone;
    rep.cases.push_back(std::move(c));
  }
  for (int i = 0; i < gcn; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + 600000ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const bool residual = i % 2 == 1;
    const int K = 1 + static_cast<int>(rng() % 4);
    std::vector<Matrix> layers;
    Index width = 2 + static_cast<Index>(rng() % 3);
    const Index first = width;
    for (int k = 0; k < K; ++k) {
      const Index next = residual ? width : 2 + static_cast<Index>(rng() % 3);
      layers.push_back(detail::gaussian(width, next, rng, 0.5));
      width = next;
    }
    const PhiFunction act = i % 4 < 2 ? PhiFunction::relu() : PhiFunction::zero();
    const Graph g = detail::verify_graph(10, 0.3, seed);
    const GcnEmbedding emb = embed_gcn(layers, residual, act);
    GcnVerifyOptions vo;
    if (o.inject_failure && i == 0) vo.corrupt_layer = 1;
    const GcnEquivalenceReport r = verify_gcn_equivalence(emb, g, detail::gaussian(10, first, rng), layers, K, vo);
    CaseResult c = detail::make_case("equivalence", "gcn-embedding", seed);
    c.pass = r.pass;
    c.metrics["K"] = K;
    c.metrics["failing_layer"] = r.failing_layer;
    double worst = 0.0;
    for (double v : r.max_diff) worst = std::max(worst, v);
    c.metrics["max_diff"] = worst;
    c.detail = residual ? "residual" : "plain";
    rep.cases.push_back(std::move(c));
  }
  rep.seconds = detail::elapsed(t0);
  return rep;
}

// Implicit backward pass and the unrolled model gradient against central
// finite differences on small instances (n <= 16, d <= 4).
inline SuiteReport verify_gradients_suite(const VerifyOptions& o = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"gradients", {}, 0.0};
  const int count = detail::count_or(o, 6);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng(seed);
    const Index n = 6 + static_cast<Index>(rng() % 11), d = 1 + static_cast<Index>(rng() % 4);
    const Graph g = detail::verify_graph(n, 0.3, seed);
    const SparseMatrix p = propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized);
    const Matrix w = project_weights(detail::gaussian(d, d, rng), spectral_norm(p), 0.7);
    const Matrix fx = detail::gaussian(n, d, rng), cot = detail::gaussian(n, d, rng);
    FixedPointConfig cfg;
    cfg.tol = 1e-13;
    const FixedPointResult r = fixed_point_solve(p, w, fx, cfg);
    ImplicitGradients grads = implicit_backward(p, w, fx, r.y_star, cot, cfg.activation);
    if (o.inject_failure && i == 0) grads.grad_w_p(0, 0) += 0.1;
    auto loss = [&](const Matrix& ww, const Matrix& ff) {
      return fixed_point_solve(p, ww, ff, cfg).y_star.cwiseProduct(cot).sum();
    };
    const double h = 1e-6;
    double worst = 0.0;
    for (Index k = 0; k < w.size(); ++k) {
      Matrix wp = w, wm = w;
      wp.data()[k] += h;
      wm.data()[k] -= h;
      const double fd = (loss(wp, fx) - loss(wm, fx)) / (2 * h);
      worst = std::max(worst, std::abs(grads.grad_w_p.data()[k] - fd) / std::max(1.0, std::abs(fd)));
    }
    for (Index k = 0; k < fx.size(); k += 2) {
      Matrix fp = fx, fm = fx;
      fp.data()[k] += h;
      fm.data()[k] -= h;
      const double fd = (loss(w, fp) - loss(w, fm)) / (2 * h);
      worst = std::max(worst, std::abs(grads.grad_fx.data()[k] - fd) / std::max(1.0, std::abs(fd)));
    }
    CaseResult c = detail::make_case("gradients", "implicit", seed);
    c.metrics["max_rel_error"] = worst;
    c.pass = worst < 1e-4;
    rep.cases.push_back(std::move(c));
  }
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = o.seed * 1000003ULL + 400000ULL + static_cast<std::uint64_t>(i);
    SbmSpec s;
    s.blocks = {6, 6};
    s.p_in = 0.5;
    s.p_out = 0.1;
    s.feature_dim = 3;
    s.split = {0.5, 0.25};
    s.seed = seed;
    const Dataset data = sbm_generate(s);
    ModelConfig mc;
    mc.input_dim = 3;
    mc.embed_dim = 2 + i % 3;
    mc.num_classes = 2;
    mc.propagation.steps = 4;
    // Absolute rho is left out: its attention cap makes any fixed step unstable.
    const auto& menu = detail::descent_rho_menu();
    mc.energy = EnergySpec::simple(1.0, LaplacianKind::SymNormalized,
                                   menu[static_cast<std::size_t>(i) % (menu.size() - 1)],
                                   i % 2 ? PhiFunction::relu() : PhiFunction::zero());
    // The backward pass holds the step size fixed, so the check does too.
    mc.propagation.alpha = 0.1;
    if (!mc.energy.rho.is_identity()) mc.propagation.attention_schedule = PropagationConfig::every_step(4);
    mc.attention_gradient = AttentionGradient::Full;  // the true derivative, attention included
    const Model m = make_model(mc, seed);
    FdCheckOptions fo;
    fo.corrupt = o.inject_failure && i == 0;
    const FdCheckReport fr = finite_difference_check(m, data, fo);
    CaseResult c = detail::make_case("gradients", "unrolled", seed);
    c.metrics["max_rel_error"] = fr.max_rel_error;
    c.metrics["checked"] = static_cast<double>(fr.checked);
    c.metrics["skipped"] = static_cast<double>(fr.skipped);
    c.detail = "rho=" + to_string(mc.energy.rho) + " worst=" + fr.worst_param;
    c.pass = fr.pass && fr.checked > 0;
    rep.cases.push_back(std::move(c));
  }
  rep.seconds = detail::elapsed(t0);
  return rep;
}

inline SuiteReport run_verify_suite(const std::string& name, const VerifyOptions& o = {}) {
  if (name == "descent") return verify_descent_suite(o);
  if (name == "convergence") return verify_convergence_suite(o);
  if (name == "equivalence") return verify_equivalence_suite(o);
  if (name == "gradients") return verify_gradients_suite(o);
  throw InvalidArgument("unknown verify suite '" + name + "' (expected descent, convergence, equivalence or gradients)");
}

}  // namespace gprop
