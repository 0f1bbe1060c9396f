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

#include "gprop/energy.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace gprop {

enum class PropagationVariant { Plain, Preconditioned, NormalizedLaplacian };

// Exact uses the true gradient of the fidelity term, (Y - fX)(W_f + W_f^T).
// Literal applies (W_f + W_f^T) to Y only and subtracts fX unweighted.
enum class GradientMode { Exact, Literal };

inline PropagationVariant parse_variant(const std::string& name) {
  if (name == "plain") return PropagationVariant::Plain;
  if (name == "preconditioned") return PropagationVariant::Preconditioned;
  if (name == "normalized") return PropagationVariant::NormalizedLaplacian;
  throw InvalidArgument("unknown propagation variant '" + name + "'");
}

inline GradientMode parse_gradient_mode(const std::string& name) {
  if (name == "exact") return GradientMode::Exact;
  if (name == "literal") return GradientMode::Literal;
  throw InvalidArgument("unknown gradient mode '" + name + "'");
}

struct PropagationConfig {
  int steps = 16;
  std::optional<double> alpha;  // empty: recompute the descent bound whenever Gamma changes
  PropagationVariant variant = PropagationVariant::Plain;
  std::vector<int> attention_schedule;  // steps at which Gamma is refreshed from Y^k
  GradientMode mode = GradientMode::Exact;
  std::optional<Matrix> initial;  // Y^0, defaults to fX
  bool record_iterates = false;
  bool track_energy = true;
  double divergence_limit = 1e12;

  // One refresh halfway through; heterophily adds a refresh before the first step.
  static std::vector<int> sandwich(int steps, bool heterophily = false) {
    std::vector<int> s;
    if (heterophily && steps > 0) s.push_back(0);
    if (steps > 0 && (s.empty() || steps / 2 != 0)) s.push_back(steps / 2);
    return s;
  }

  static std::vector<int> every_step(int steps) {
    std::vector<int> s(std::max(steps, 0));
    for (int k = 0; k < steps; ++k) s[k] = k;
    return s;
  }

  void validate() const {
    require(steps >= 0, "propagation steps must be >= 0");
    if (alpha) require(*alpha > 0.0, "step size alpha must be positive");
    for (int k : attention_schedule) {
      require(k >= 0 && k < std::max(steps, 1), "attention step " + std::to_string(k) + " out of range");
    }
  }
};

struct PropagationResult {
  Matrix y_final;
  std::vector<EnergyValue> trace;      // K+1 entries when energy is tracked
  std::vector<EdgeDiagonal> gamma_trace;
  std::vector<int> gamma_steps;        // step index of each gamma snapshot
  std::vector<double> step_residuals;  // ||Y^{k+1} - Y^k||_F
  std::vector<double> alphas;          // step size used at each step
  std::vector<Matrix> iterates;        // Y^0..Y^K when recorded
};

struct StepSizeBound {
  double convex = 0.0;     // 2 / L
  double general = 0.0;    // 1 / L
  double lipschitz = 0.0;  // L
};

// Attention weights gamma_k = rho'(q_k), q_k the per-edge quadratic form.
inline EdgeDiagonal gamma_update(const EnergySpec& spec, const IncidenceView& view, const Matrix& y) {
  const Vector q = edge_quadratic(spec, view, y);
  Vector gamma(q.size());
  for (Index k = 0; k < q.size(); ++k) gamma[k] = gamma_of(spec.rho, q[k]);
  return EdgeDiagonal(std::move(gamma));
}

inline EdgeDiagonal gamma_update(const EnergySpec& spec, const Graph& g, const Matrix& y) {
  return gamma_update(spec, incidence(g, spec.laplacian_kind), y);
}

// Gradient of the smooth part at fixed Gamma. Simple mode returns half the
// gradient: (Y - fX) + lambda B^T Gamma B Y.
inline Matrix smooth_gradient(const EnergySpec& spec, const IncidenceView& view, const Matrix& y,
                              const Matrix& fx, const Vector& gamma, GradientMode mode) {
  Matrix lgy = view.weighted_laplacian_apply(gamma, y);
  const Index nd = y.size();
  if (spec.simple_mode) {
    op_counter().node_flops += static_cast<std::uint64_t>(3 * nd);
    return (y - fx) + spec.lambda * lgy;
  }
  const Index d = y.cols();
  op_counter().dense_flops += static_cast<std::uint64_t>(4 * nd * d);
  op_counter().node_flops += static_cast<std::uint64_t>(2 * nd);
  if (mode == GradientMode::Exact) return lgy * spec.w_p_sym() + (y - fx) * spec.w_f_sym();
  return lgy * spec.w_p_sym() + y * spec.w_f_sym() - fx;
}

inline Matrix abridged_gradient_step(const EnergySpec& spec, const IncidenceView& view, const Matrix& y,
                                     const Matrix& fx, const EdgeDiagonal& gamma, double alpha,
                                     GradientMode mode = GradientMode::Exact) {
  require(y.rows() == fx.rows() && y.cols() == fx.cols(), "gradient step: Y and fX shapes differ");
  require(gamma.size() == view.rows(), "gradient step: one attention weight per edge required");
  spec.check_dims(y.cols());
  op_counter().node_flops += static_cast<std::uint64_t>(2 * y.size());
  return y - alpha * smooth_gradient(spec, view, y, fx, gamma.values(), mode);
}

inline Matrix abridged_gradient_step(const EnergySpec& spec, const Graph& g, const Matrix& y,
                                     const Matrix& fx, const EdgeDiagonal& gamma, double alpha,
                                     GradientMode mode = GradientMode::Exact) {
  return abridged_gradient_step(spec, incidence(g, spec.laplacian_kind), y, fx, gamma, alpha, mode);
}

// Lipschitz constant of the smooth-part gradient at the given Gamma (default:
// the supremum of rho'), and the resulting step-size limits. Simple mode is
// in half-gradient units: L = ||I + lambda B^T Gamma B||_2.
inline StepSizeBound step_size_bound(const EnergySpec& spec, const IncidenceView& view, Index d,
                                     const std::optional<Vector>& gamma = std::nullopt) {
  const Index n = view.cols();
  const Vector g = gamma ? *gamma : Vector::Constant(view.rows(), gamma_max(spec.rho));
  require(g.size() == view.rows(), "step_size_bound: gamma length must equal edge count");
  StepSizeBound out;
  if (spec.simple_mode) {
    auto apply = [&](const Vector& x) -> Vector {
      Matrix xm = x;
      return view.weighted_laplacian_apply(g, xm).col(0);
    };
    const double lmax = view.rows() == 0 ? 0.0 : operator_norm(n, n, apply, apply);
    out.lipschitz = 1.0 + spec.lambda * lmax;
  } else {
    spec.check_dims(d);
    const Matrix wf = spec.w_f_sym(), wp = spec.w_p_sym();
    auto apply = [&](const Vector& x) -> Vector {
      Eigen::Map<const Matrix> y(x.data(), n, d);
      Matrix out_m = y * wf + view.weighted_laplacian_apply(g, y) * wp;
      return Eigen::Map<const Vector>(out_m.data(), out_m.size());
    };
    out.lipschitz = operator_norm(n * d, n * d, apply, apply);
  }
  require(out.lipschitz > 0.0, "step_size_bound: smooth part has zero curvature");
  out.convex = 2.0 / out.lipschitz;
  out.general = 1.0 / out.lipschitz;
  return out;
}

inline StepSizeBound step_size_bound(const EnergySpec& spec, const Graph& g, Index d,
                                     const std::optional<Vector>& gamma = std::nullopt) {
  return step_size_bound(spec, incidence(g, spec.laplacian_kind), d, gamma);
}

// Solves (I + lambda L) Y = fX by sparse Cholesky.
inline Matrix closed_form_solution(const Graph& g, const Matrix& fx, double lambda, LaplacianKind kind) {
  require(lambda >= 0.0, "closed form: lambda must be non-negative");
  require(fx.rows() == g.num_nodes(), "closed form: fX rows must equal node count");
  const Index n = g.num_nodes();
  Eigen::SparseMatrix<double> a(n, n);
  a.setIdentity();
  a += lambda * Eigen::SparseMatrix<double>(laplacian(g, kind));
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalError("closed form: factorization failed");
  Matrix y = solver.solve(fx);
  const double scale = std::max(fx.norm(), 1e-300);
  if (solver.info() != Eigen::Success || !y.allFinite() || (a * y - fx).norm() > 1e-10 * scale) {
    throw NumericalError("closed form: solve did not reach 1e-10 residual");
  }
  return y;
}

// Operators for the Z-space step with D~ = I + lambda D:
//   Z+ = (1 - a) Z + a lambda D~^{-1/2} A D~^{-1/2} Z + a D~^{-1} Z0.
struct PreconditionedOperator {
  SparseMatrix scaled_adjacency;  // D~^{-1/2} A D~^{-1/2}
  Vector dinv;                    // D~^{-1}
  Vector dinv_sqrt;               // D~^{-1/2}
  double lambda = 1.0;

  PreconditionedOperator(const Graph& g, double lambda_) : lambda(lambda_) {
    const Vector dt = Vector::Ones(g.num_nodes()) + lambda * g.degrees();
    dinv = dt.cwiseInverse();
    dinv_sqrt = dinv.cwiseSqrt();
    scaled_adjacency = dinv_sqrt.asDiagonal() * g.adjacency() * dinv_sqrt.asDiagonal();
    scaled_adjacency.makeCompressed();
  }

  Matrix step(const Matrix& z, const Matrix& z0, double alpha) const {
    op_counter().edge_flops += static_cast<std::uint64_t>(2 * scaled_adjacency.nonZeros() * z.cols());
    op_counter().node_flops += static_cast<std::uint64_t>(5 * z.size());
    return (1.0 - alpha) * z + alpha * lambda * (scaled_adjacency * z) + alpha * (dinv.asDiagonal() * z0);
  }

  // ||D~^{-1/2}(I + lambda L)D~^{-1/2}||_2, the curvature in Z-space.
  double lipschitz() const {
    const Index n = dinv.size();
    auto apply = [&](const Vector& x) -> Vector {
      return x - lambda * (scaled_adjacency * x);
    };
    return operator_norm(n, n, apply, apply);
  }
};

inline Matrix preconditioned_step(const Graph& g, const Matrix& z, const Matrix& z0, double alpha,
                                  double lambda) {
  return PreconditionedOperator(g, lambda).step(z, z0, alpha);
}

// Y+ = (1 - a - a lambda) Y + a lambda D~^{-1/2} A~ D~^{-1/2} Y + a Y0, D~ = I + D.
inline Matrix normalized_step(const Graph& g, const Matrix& y, const Matrix& y0, double alpha,
                              double lambda) {
  const SparseMatrix p = propagation_matrix(g, LaplacianKind::SelfLoopSymNormalized);
  op_counter().edge_flops += static_cast<std::uint64_t>(2 * p.nonZeros() * y.cols());
  return (1.0 - alpha - alpha * lambda) * y + alpha * lambda * (p * y) + alpha * y0;
}

namespace detail {

inline void check_finite(const Matrix& y, int step, double limit) {
  if (!y.allFinite()) throw NumericalError("propagation produced non-finite values", step);
  if (y.norm() > limit) throw NumericalError("propagation diverged: ||Y||_F exceeds limit", step);
}

inline PropagationResult propagate_preconditioned(const EnergySpec& spec, const Graph& g, const Matrix& z0,
                                                  const PropagationConfig& cfg) {
  require(spec.simple_mode, "preconditioned propagation requires the simple energy");
  require(spec.rho.is_identity() && cfg.attention_schedule.empty(),
          "preconditioned propagation does not support attention");
  PreconditionedOperator op(g, spec.lambda);
  const double alpha = cfg.alpha ? *cfg.alpha : 1.0 / op.lipschitz();
  const EnergySpec y_spec = EnergySpec::simple(spec.lambda, LaplacianKind::Combinatorial, {}, spec.phi);
  const IncidenceView view = incidence(g, LaplacianKind::Combinatorial);
  const Matrix base = op.dinv_sqrt.asDiagonal() * z0;

  PropagationResult out;
  Matrix z = cfg.initial ? *cfg.initial : z0;
  require(z.rows() == z0.rows() && z.cols() == z0.cols(), "initial embedding shape mismatch");
  auto record = [&](const Matrix& zk) {
    if (cfg.track_energy) out.trace.push_back(energy_eval(y_spec, view, op.dinv_sqrt.asDiagonal() * zk, base));
    if (cfg.record_iterates) out.iterates.push_back(zk);
  };
  record(z);
  for (int k = 0; k < cfg.steps; ++k) {
    Matrix next = prox_apply(spec.phi, op.step(z, z0, alpha), alpha);
    check_finite(next, k + 1, cfg.divergence_limit);
    out.step_residuals.push_back((next - z).norm());
    out.alphas.push_back(alpha);
    z = std::move(next);
    record(z);
  }
  out.y_final = std::move(z);
  return out;
}

}  // namespace detail

// K proximal-gradient steps Y^{k+1} = prox(U^k) from Y^0 = fX, refreshing
// Gamma at the scheduled steps. The Preconditioned variant runs in Z-space
// and treats fX as Z^0; its energy trace is reported for Y = D~^{-1/2} Z.
inline PropagationResult propagate(const EnergySpec& spec_in, const Graph& g, const Matrix& fx,
                                   const PropagationConfig& cfg) {
  cfg.validate();
  require(fx.rows() == g.num_nodes(), "propagate: fX rows must equal node count");
  spec_in.check_dims(fx.cols());
  if (cfg.variant == PropagationVariant::Preconditioned) {
    return detail::propagate_preconditioned(spec_in, g, fx, cfg);
  }
  EnergySpec spec = spec_in;
  if (cfg.variant == PropagationVariant::NormalizedLaplacian) {
    require(spec.simple_mode, "normalized-Laplacian propagation requires the simple energy");
    spec.laplacian_kind = LaplacianKind::SelfLoopSymNormalized;
  }
  const IncidenceView view = incidence(g, spec.laplacian_kind);
  const std::set<int> refresh(cfg.attention_schedule.begin(), cfg.attention_schedule.end());

  PropagationResult out;
  Matrix y = cfg.initial ? *cfg.initial : fx;
  require(y.rows() == fx.rows() && y.cols() == fx.cols(), "initial embedding shape mismatch");
  Vector gamma = Vector::Ones(view.rows());
  std::optional<double> alpha = cfg.alpha;

  auto record = [&](const Matrix& yk) {
    if (cfg.track_energy) out.trace.push_back(energy_eval(spec, view, yk, fx));
    if (cfg.record_iterates) out.iterates.push_back(yk);
  };
  record(y);
  for (int k = 0; k < cfg.steps; ++k) {
    if (refresh.count(k)) {
      gamma = gamma_update(spec, view, y).values();
      out.gamma_trace.emplace_back(gamma);
      out.gamma_steps.push_back(k);
      if (!cfg.alpha) alpha.reset();
    }
    if (!alpha) alpha = step_size_bound(spec, view, y.cols(), gamma).general;
    Matrix u = y - *alpha * smooth_gradient(spec, view, y, fx, gamma, cfg.mode);
    Matrix next = prox_apply(spec.phi, u, *alpha);
    detail::check_finite(next, k + 1, cfg.divergence_limit);
    out.step_residuals.push_back((next - y).norm());
    out.alphas.push_back(*alpha);
    y = std::move(next);
    record(y);
  }
  out.y_final = std::move(y);
  return out;
}

struct DescentReport {
  bool pass = true;
  int first_violation = -1;  // k such that trace[k+1] > trace[k] + slack
  double increase = 0.0;
  std::size_t checked = 0;
};

// A step from +inf never violates; a step from a finite value to +inf does.
// Slack is scaled by max(1, |E_k|).
inline DescentReport verify_descent(const std::vector<EnergyValue>& trace, double slack = 1e-9) {
  DescentReport r;
  for (std::size_t k = 0; k + 1 < trace.size(); ++k) {
    const double prev = trace[k].total, next = trace[k + 1].total;
    ++r.checked;
    if (std::isinf(prev) && prev > 0) continue;
    const bool bad = std::isnan(next) || std::isnan(prev) || next > prev + slack * std::max(1.0, std::abs(prev));
    if (bad) {
      r.pass = false;
      r.first_violation = static_cast<int>(k);
      r.increase = next - prev;
      return r;
    }
  }
  return r;
}

inline DescentReport verify_descent(const PropagationResult& result, double slack = 1e-9) {
  return verify_descent(result.trace, slack);
}

inline void write_trace_csv(std::ostream& out, const PropagationResult& result) {
  out << "# gprop-csv v1 trace\n";
  out << "step,fidelity,smoothness,phi,total,residual\n";
  out.precision(17);
  for (std::size_t k = 0; k < result.trace.size(); ++k) {
    const EnergyValue& e = result.trace[k];
    out << k << ',' << e.fidelity << ',' << e.smoothness << ',' << e.phi_term << ',' << e.total << ',';
    if (k > 0 && k - 1 < result.step_residuals.size()) out << result.step_residuals[k - 1];
    out << '\n';
  }
}

inline void write_gamma_csv(std::ostream& out, const PropagationResult& result, const Graph& g) {
  out << "# gprop-csv v1 gamma\n";
  out << "step,edge,u,v,gamma\n";
  out.precision(17);
  for (std::size_t s = 0; s < result.gamma_trace.size(); ++s) {
    const Vector& gv = result.gamma_trace[s].values();
    for (Index k = 0; k < gv.size(); ++k) {
      out << result.gamma_steps[s] << ',' << k << ',' << g.edges()[k].u << ',' << g.edges()[k].v << ','
          << gv[k] << '\n';
    }
  }
}

}  // namespace gprop
