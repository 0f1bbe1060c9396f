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

#include "gprop/implicit.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

namespace gprop {

struct SymmetrizeOptions {
  std::uint64_t seed = 1;
  int retries = 16;
  double condition_limit = 1e10;
};

// Real representation of a linear fixed point Y = P Y W + X W_x through
// Y' T = P Y' T S + X W~, with T (d x 2d) right-invertible.
struct SymmetricRepresentation {
  Matrix T;
  Matrix T_right;
  Matrix w_p_sym;
  Matrix w_x_tilde;
  Matrix w_p;            // original weight
  Matrix w_p_perturbed;  // diagonalizable weight actually decomposed
  Matrix w_x;
  double jitter_norm = 0.0;  // ||W' - W||_2
  double asymmetry = 0.0;    // ||S - S^T||_F, zero iff the spectrum is real
  double condition = 1.0;    // condition number of the eigenbasis
  int attempts = 0;          // jitter draws used, 0 when none was needed
};

namespace detail {

using ComplexMatrix = Eigen::MatrixXcd;

struct EigenBasis {
  ComplexMatrix R;
  Eigen::VectorXcd lambda;
  double separation = 0.0;
  double condition = 0.0;
};

inline EigenBasis eigen_basis(const Matrix& w) {
  Eigen::EigenSolver<Matrix> es(w, true);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  EigenBasis b;
  b.R = es.eigenvectors();
  b.lambda = es.eigenvalues();
  const Index d = w.rows();
  b.separation = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) b.separation = std::min(b.separation, std::abs(b.lambda[i] - b.lambda[j]));
  Eigen::JacobiSVD<ComplexMatrix> svd(b.R);
  const auto& s = svd.singularValues();
  b.condition = s[d - 1] > 0.0 ? s[0] / s[d - 1] : std::numeric_limits<double>::infinity();
  return b;
}

}  // namespace detail

inline SymmetricRepresentation symmetrize_linear(const Matrix& w_p, const Matrix& w_x, double eps,
                                                 const SymmetrizeOptions& options = {}) {
  require(w_p.rows() == w_p.cols(), "symmetrize: W_p must be square");
  require(w_x.cols() == w_p.rows(), "symmetrize: W_x must have d columns");
  require(eps > 0.0, "symmetrize: eps must be positive");
  const Index d = w_p.rows();
  SymmetricRepresentation rep;
  rep.w_p = w_p;
  rep.w_x = w_x;

  detail::ComplexMatrix R, Rinv;
  Eigen::VectorXcd lambda;
  const bool symmetric = (w_p - w_p.transpose()).norm() <= 1e-14 * std::max(1.0, w_p.norm());
  if (symmetric) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (w_p + w_p.transpose()));
    R = es.eigenvectors().cast<std::complex<double>>();
    Rinv = es.eigenvectors().transpose().cast<std::complex<double>>();
    lambda = es.eigenvalues().cast<std::complex<double>>();
    rep.w_p_perturbed = w_p;
  } else {
    const double min_sep = eps / (10.0 * static_cast<double>(d));
    detail::EigenBasis basis = detail::eigen_basis(w_p);
    Matrix w_prime = w_p;
    if (basis.separation <= min_sep || basis.condition > options.condition_limit) {
      Eigen::RealSchur<Matrix> schur(w_p);
      const Matrix& U = schur.matrixU();
      const Matrix& Tq = schur.matrixT();
      std::mt19937_64 rng(options.seed);
      std::uniform_real_distribution<double> jitter(-eps / std::sqrt(static_cast<double>(d)),
                                                    eps / std::sqrt(static_cast<double>(d)));
      bool ok = false;
      for (int attempt = 1; attempt <= options.retries && !ok; ++attempt) {
        Matrix t = Tq;
        for (Index i = 0; i < d; ++i) t(i, i) += jitter(rng);
        w_prime = U * t * U.transpose();
        basis = detail::eigen_basis(w_prime);
        rep.attempts = attempt;
        ok = basis.separation > min_sep && basis.condition <= options.condition_limit;
      }
      if (!ok) {
        throw NumericalError("symmetrize: no well-conditioned diagonalizable perturbation found after " +
                             std::to_string(options.retries) + " draws");
      }
    }
    R = basis.R;
    Rinv = R.inverse();
    lambda = basis.lambda;
    rep.condition = basis.condition;
    rep.w_p_perturbed = w_prime;
  }
  rep.jitter_norm = dense_norm2(rep.w_p_perturbed - w_p);

  rep.T.resize(d, 2 * d);
  rep.T << R.real(), R.imag();
  rep.T_right.resize(2 * d, d);
  rep.T_right << Rinv.real(), -Rinv.imag();
  const Matrix re = lambda.real().asDiagonal();
  const Matrix im = lambda.imag().asDiagonal();
  rep.w_p_sym.resize(2 * d, 2 * d);
  rep.w_p_sym << re, im, -im, re;
  const detail::ComplexMatrix wxr = w_x.cast<std::complex<double>>() * R;
  rep.w_x_tilde.resize(w_x.rows(), 2 * d);
  rep.w_x_tilde << wxr.real(), wxr.imag();
  rep.asymmetry = (rep.w_p_sym - rep.w_p_sym.transpose()).norm();
  return rep;
}

struct LinearEquivalenceReport {
  double residual = 0.0;  // ||Y'T - (P Y'T S + X W~)||_F
  double drift = 0.0;     // ||Y' - Y*||_F
  double right_inverse_error = 0.0;
};

inline LinearEquivalenceReport verify_linear_equivalence(const SymmetricRepresentation& rep,
                                                         const SparseMatrix& p, const Matrix& x,
                                                         double tol = 1e-13) {
  FixedPointConfig cfg;
  cfg.tol = tol;
  cfg.max_iters = 100000;
  const Matrix xw = x * rep.w_x;
  const double p_norm = spectral_norm(p);
  const Matrix y_star = fixed_point_solve(p, rep.w_p, xw, cfg, p_norm).y_star;
  const Matrix y_prime = fixed_point_solve(p, rep.w_p_perturbed, xw, cfg, p_norm).y_star;
  LinearEquivalenceReport out;
  const Matrix yt = y_prime * rep.T;
  out.residual = (yt - (p * yt * rep.w_p_sym + x * rep.w_x_tilde)).norm();
  out.drift = (y_prime - y_star).norm();
  const Index d = rep.T.rows();
  out.right_inverse_error = (rep.T * rep.T_right - Matrix::Identity(d, d)).norm();
  return out;
}

inline LinearEquivalenceReport verify_linear_equivalence(const SymmetricRepresentation& rep, const Graph& g,
                                                         const Matrix& x,
                                                         LaplacianKind kind = LaplacianKind::SelfLoopSymNormalized) {
  return verify_linear_equivalence(rep, propagation_matrix(g, kind), x);
}

// Block-structured symmetric weights under which K unfolded steps with unit
// step size and zero base prediction reproduce a K-layer GCN in their
// diagonal blocks.
struct GcnEmbedding {
  Matrix w_p_sym;
  Matrix w_r_sym;
  Matrix w_f_sym;
  std::vector<Index> widths;   // d_0 .. d_K
  std::vector<Index> offsets;  // column offset of each block
  bool residual = false;
  PhiFunction activation;
  LaplacianKind kind = LaplacianKind::SelfLoopSymNormalized;

  Index total_width() const { return offsets.back() + widths.back(); }
  int layers() const { return static_cast<int>(widths.size()) - 1; }

  Matrix pad(const Matrix& y0) const {
    require(y0.cols() == widths.front(), "GCN embedding: input width mismatch");
    Matrix out = Matrix::Zero(y0.rows(), total_width());
    out.leftCols(widths.front()) = y0;
    return out;
  }

  Matrix extract(const Matrix& y, int k) const {
    require(k >= 0 && k <= layers(), "GCN embedding: block index out of range");
    return y.middleCols(offsets[k], widths[k]);
  }

  // 0/1 selector whose product with Y picks block k.
  Matrix selector(int k) const {
    Matrix t = Matrix::Zero(total_width(), widths[k]);
    t.block(offsets[k], 0, widths[k], widths[k]).setIdentity();
    return t;
  }

  EnergySpec energy_spec() const {
    return EnergySpec::general(0.5 * w_f_sym, 0.5 * w_p_sym, kind, RhoFunction::identity(), activation);
  }

  // Free entries of the symmetric block weights: one triangle of W_p plus the
  // identity blocks under residual connections.
  Index parameter_count() const {
    Index count = 0;
    for (int k = 1; k <= layers(); ++k) count += widths[k - 1] * widths[k] + (residual ? widths[k] : 0);
    return count;
  }
};

inline GcnEmbedding embed_gcn(const std::vector<Matrix>& layers, bool residual, PhiFunction activation,
                              LaplacianKind kind = LaplacianKind::SelfLoopSymNormalized) {
  require(!layers.empty(), "embed_gcn: need at least one layer");
  GcnEmbedding e;
  e.residual = residual;
  e.activation = activation;
  e.kind = kind;
  e.widths.push_back(layers.front().rows());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].rows() != e.widths.back()) {
      throw InvalidArgument("embed_gcn: layer " + std::to_string(k + 1) + " expects input width " +
                            std::to_string(layers[k].rows()) + ", previous width is " +
                            std::to_string(e.widths.back()));
    }
    if (residual && layers[k].rows() != layers[k].cols()) {
      throw InvalidArgument("embed_gcn: residual connections need square layers (layer " +
                            std::to_string(k + 1) + ")");
    }
    e.widths.push_back(layers[k].cols());
  }
  e.offsets.assign(e.widths.size(), 0);
  for (std::size_t k = 1; k < e.widths.size(); ++k) e.offsets[k] = e.offsets[k - 1] + e.widths[k - 1];
  const Index D = e.total_width();
  e.w_p_sym = Matrix::Zero(D, D);
  e.w_r_sym = Matrix::Zero(D, D);
  for (std::size_t k = 1; k < e.widths.size(); ++k) {
    const Index r = e.offsets[k - 1], c = e.offsets[k];
    e.w_p_sym.block(r, c, e.widths[k - 1], e.widths[k]) = layers[k - 1];
    e.w_p_sym.block(c, r, e.widths[k], e.widths[k - 1]) = layers[k - 1].transpose();
    if (residual) {
      e.w_r_sym.block(r, c, e.widths[k - 1], e.widths[k]).setIdentity();
      e.w_r_sym.block(c, r, e.widths[k], e.widths[k - 1]).setIdentity();
    }
  }
  e.w_f_sym = Matrix::Identity(D, D) - e.w_p_sym - e.w_r_sym;
  return e;
}

// Direct GCN: Y^k = sigma(P Y^{k-1} W^k [+ Y^{k-1}]). Returns Y^0..Y^K.
inline std::vector<Matrix> gcn_forward(const SparseMatrix& p, const Matrix& y0, const std::vector<Matrix>& layers,
                                       bool residual, const PhiFunction& activation) {
  std::vector<Matrix> out{y0};
  for (const Matrix& w : layers) {
    Matrix pre = p * out.back() * w;
    if (residual) pre += out.back();
    out.push_back(prox_apply(activation, pre, 1.0));
  }
  return out;
}

struct GcnEquivalenceReport {
  bool pass = true;
  int failing_layer = -1;
  std::vector<double> max_diff;  // per layer 0..K
};

struct GcnVerifyOptions {
  double tol = 1e-10;
  int corrupt_layer = -1;  // read the wrong block at this layer (negative control)
};

// Runs the embedded energy through propagate() and compares block k of the
// k-th iterate with the oracle GCN output of layer k.
inline GcnEquivalenceReport verify_gcn_equivalence(const GcnEmbedding& emb, const Graph& g, const Matrix& y0,
                                                   const std::vector<Matrix>& layers, int K,
                                                   const GcnVerifyOptions& options = {}) {
  require(K >= 0 && K <= emb.layers(), "verify_gcn_equivalence: K exceeds the embedded depth");
  const SparseMatrix p = propagation_matrix(g, emb.kind);
  const std::vector<Matrix> oracle = gcn_forward(p, y0, layers, emb.residual, emb.activation);
  PropagationConfig cfg;
  cfg.steps = K;
  cfg.alpha = 1.0;
  cfg.initial = emb.pad(y0);
  cfg.record_iterates = true;
  cfg.track_energy = false;
  const Matrix zero = Matrix::Zero(y0.rows(), emb.total_width());
  PropagationResult run = propagate(emb.energy_spec(), g, zero, cfg);

  GcnEquivalenceReport report;
  for (int k = 0; k <= K; ++k) {
    int block = k;
    if (k == options.corrupt_layer) block = k > 0 ? k - 1 : std::min(1, emb.layers());
    const Matrix got = run.iterates[k].middleCols(emb.offsets[block], emb.widths[block]);
    double diff = std::numeric_limits<double>::infinity();
    if (got.cols() == oracle[k].cols()) diff = (got - oracle[k]).cwiseAbs().maxCoeff();
    if (got.size() == 0) diff = 0.0;
    report.max_diff.push_back(diff);
    if (!(diff <= options.tol) && report.pass) {
      report.pass = false;
      report.failing_layer = k;
    }
  }
  return report;
}

}  // namespace gprop
