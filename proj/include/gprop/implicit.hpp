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

#include "gprop/unfold.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace gprop {

struct FixedPointConfig {
  PhiFunction activation;  // sigma = prox of this penalty at unit step
  LaplacianKind propagation = LaplacianKind::SelfLoopSymNormalized;
  double tol = 1e-8;
  int max_iters = 5000;
  double contraction_margin = 0.9;
  std::optional<Matrix> initial;  // defaults to zero

  void validate() const {
    require(tol > 0.0, "fixed point: tol must be positive");
    require(max_iters > 0, "fixed point: max_iters must be positive");
    require(contraction_margin > 0.0 && contraction_margin < 1.0, "contraction margin must be in (0,1)");
  }
};

struct FixedPointResult {
  Matrix y_star;
  int iterations = 0;
  double residual = 0.0;  // ||F(Y) - Y||_F at the last accepted iterate
  std::vector<double> residual_history;
  double contraction_estimate = 0.0;  // observed geometric ratio of residuals
  double contraction_bound = 0.0;     // ||W_p||_2 ||P||_2
  bool certified = false;             // contraction_bound < 1
};

// Scales W_p so that ||W_p||_2 ||P||_2 <= margin. Inputs already inside the
// ball are returned unchanged.
inline Matrix project_weights(const Matrix& w_p, double p_norm, double margin) {
  require(margin > 0.0 && margin < 1.0, "projection margin must be in (0,1)");
  const double product = dense_norm2(w_p) * p_norm;
  if (product <= margin * (1.0 + 1e-12)) return w_p;
  return w_p * (margin / product);
}

inline Matrix project_weights(const Matrix& w_p, const SparseMatrix& p, double margin) {
  return project_weights(w_p, spectral_norm(p), margin);
}

namespace detail {

inline double geometric_ratio(const std::vector<double>& r, double floor) {
  // median of consecutive ratios over the tail where residuals are above floor
  std::vector<double> ratios;
  for (std::size_t k = 1; k < r.size(); ++k) {
    if (r[k - 1] > floor && r[k] > floor) ratios.push_back(r[k] / r[k - 1]);
  }
  if (ratios.empty()) return 0.0;
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  return ratios[ratios.size() / 2];
}

}  // namespace detail

// Iterates Y <- sigma(P Y W_p + fX) from Y^0 = 0 until ||F(Y) - Y||_F <= tol.
inline FixedPointResult fixed_point_solve(const SparseMatrix& p, const Matrix& w_p, const Matrix& fx,
                                          const FixedPointConfig& cfg, double p_norm = -1.0) {
  cfg.validate();
  require(p.rows() == fx.rows() && p.cols() == fx.rows(), "fixed point: P must be n x n");
  require(w_p.rows() == fx.cols() && w_p.cols() == fx.cols(), "fixed point: W_p must be d x d");
  FixedPointResult out;
  out.contraction_bound = dense_norm2(w_p) * (p_norm >= 0.0 ? p_norm : spectral_norm(p));
  out.certified = out.contraction_bound < 1.0;

  Matrix y = cfg.initial ? *cfg.initial : Matrix::Zero(fx.rows(), fx.cols());
  require(y.rows() == fx.rows() && y.cols() == fx.cols(), "fixed point: initial shape mismatch");
  const Index d = fx.cols();
  for (int k = 0; k <= cfg.max_iters; ++k) {
    Matrix next = prox_apply(cfg.activation, (p * y) * w_p + fx, 1.0);
    op_counter().edge_flops += static_cast<std::uint64_t>(2 * p.nonZeros() * d);
    op_counter().dense_flops += static_cast<std::uint64_t>(2 * y.size() * d);
    if (!next.allFinite()) throw NumericalError("fixed point iteration produced non-finite values", k);
    const double r = (next - y).norm();
    out.residual_history.push_back(r);
    y = std::move(next);
    if (r <= cfg.tol) {
      out.y_star = std::move(y);
      out.iterations = k;
      out.residual = r;
      out.contraction_estimate = detail::geometric_ratio(out.residual_history, 0.0);
      return out;
    }
  }
  throw NumericalError("fixed point did not converge in " + std::to_string(cfg.max_iters) +
                           " iterations (residual " + detail::fmt(out.residual_history.back()) + ")",
                       cfg.max_iters);
}

inline FixedPointResult fixed_point_solve(const Graph& g, const Matrix& w_p, const Matrix& fx,
                                          const FixedPointConfig& cfg) {
  return fixed_point_solve(propagation_matrix(g, cfg.propagation), w_p, fx, cfg);
}

struct ImplicitGradients {
  Matrix grad_w_p;
  Matrix grad_fx;
  int iterations = 0;
};

// Adjoint of Y* = sigma(P Y* W + fX). With a = dL/dZ at the pre-activation Z:
//   a = D (g + P^T a W^T), D = sigma'(Z),
// solved by fixed-point iteration of the transposed contraction.
inline ImplicitGradients implicit_backward(const SparseMatrix& p, const Matrix& w_p, const Matrix& fx,
                                           const Matrix& y_star, const Matrix& upstream,
                                           const PhiFunction& activation, double tol = 1e-12,
                                           int max_iters = 10000) {
  require(upstream.rows() == y_star.rows() && upstream.cols() == y_star.cols(),
          "implicit backward: upstream gradient shape mismatch");
  const Matrix py = p * y_star;
  const Matrix slope = prox_slope(activation, Matrix(py * w_p + fx), 1.0);
  const SparseMatrix pt = p.transpose();
  const Matrix wt = w_p.transpose();
  Matrix a = slope.cwiseProduct(upstream);
  ImplicitGradients out;
  const double scale = std::max(upstream.norm(), 1e-300);
  for (int k = 1;; ++k) {
    Matrix next = slope.cwiseProduct(upstream + (pt * a) * wt);
    const double r = (next - a).norm();
    a = std::move(next);
    if (r <= tol * scale) {
      out.iterations = k;
      break;
    }
    if (k >= max_iters || !a.allFinite()) {
      throw NumericalError("adjoint iteration did not converge", k);
    }
  }
  out.grad_fx = a;
  out.grad_w_p = py.transpose() * a;
  return out;
}

inline ImplicitGradients implicit_backward(const Graph& g, const Matrix& w_p, const Matrix& fx,
                                           const Matrix& y_star, const Matrix& upstream,
                                           const FixedPointConfig& cfg) {
  return implicit_backward(propagation_matrix(g, cfg.propagation), w_p, fx, y_star, upstream,
                           cfg.activation);
}

// EIGNN: W = s^2 F^T F with s^2 = 1 / (||F^T F|| + eps_F), fixed point of
// Y = mu P Y W + fX.
struct EignnSpec {
  enum class Norm { Frobenius, Spectral };

  Matrix F;
  double mu = 0.9;
  double eps_f = 1e-6;
  Norm norm = Norm::Frobenius;

  Matrix weight() const {
    require(eps_f > 0.0, "EIGNN: eps_F must be positive");
    const Matrix ftf = F.transpose() * F;
    const double nrm = norm == Norm::Frobenius ? ftf.norm() : dense_norm2(ftf);
    return ftf / (nrm + eps_f);
  }
};

inline FixedPointResult eignn_forward(const Graph& g, const EignnSpec& spec, const Matrix& fx,
                                      double tol = 1e-10, int max_iters = 20000) {
  require(spec.mu >= 0.0 && spec.mu < 1.0, "EIGNN: mu must be in [0,1)");
  require(spec.F.cols() == fx.cols(), "EIGNN: F must have d columns");
  FixedPointConfig cfg;
  cfg.tol = tol;
  cfg.max_iters = max_iters;
  cfg.propagation = LaplacianKind::SelfLoopSymNormalized;
  return fixed_point_solve(g, spec.mu * spec.weight(), fx, cfg);
}

// Energy whose literal-mode unfolding at unit step has the EIGNN fixed
// point: W_p^s = mu W, W_f^s = I - mu W.
inline EnergySpec eignn_energy(const EignnSpec& spec) {
  const Matrix w = spec.mu * spec.weight();
  const Index d = w.rows();
  return EnergySpec::general(0.5 * (Matrix::Identity(d, d) - w), 0.5 * w,
                             LaplacianKind::SelfLoopSymNormalized);
}

}  // namespace gprop
