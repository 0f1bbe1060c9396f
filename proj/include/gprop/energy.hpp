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
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace gprop {

namespace detail {

// "name:k1=v1,k2=v2" -> name plus a key/value map.
struct ParamString {
  std::string name;
  std::map<std::string, double> params;
};

inline ParamString parse_param_string(const std::string& text) {
  ParamString out;
  auto colon = text.find(':');
  out.name = text.substr(0, colon);
  if (colon == std::string::npos) return out;
  std::stringstream rest(text.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("expected key=value in '" + text + "'");
    std::string key = item.substr(0, eq);
    std::string value = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw InvalidArgument("bad number '" + value + "' for " + key + " in '" + text + "'");
    }
    out.params[key] = v;
  }
  return out;
}

inline double take(ParamString& ps, const std::string& key, double fallback) {
  auto it = ps.params.find(key);
  if (it == ps.params.end()) return fallback;
  double v = it->second;
  ps.params.erase(it);
  return v;
}

inline void reject_leftovers(const ParamString& ps) {
  if (!ps.params.empty()) {
    throw InvalidArgument("unknown parameter '" + ps.params.begin()->first + "' for " + ps.name);
  }
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

}  // namespace detail

// Robust edge penalty rho(z^2). All parameters are in user-facing units; the
// truncated l_p family applies tau_bar = tau^(2-p), T_bar = T^(2-p) itself.
struct RhoFunction {
  enum class Kind { Identity, Log, TruncatedQuadratic, TruncatedLp, CosineDerived, Absolute };

  Kind kind = Kind::Identity;
  double eps = 1.0;
  double tau = 1.0;
  double p = 1.0;
  double T = 1.0;
  double gamma_cap = 1e6;

  static RhoFunction identity() { return {}; }
  static RhoFunction log(double eps) {
    RhoFunction r;
    r.kind = Kind::Log;
    r.eps = eps;
    r.validate();
    return r;
  }
  static RhoFunction truncated_quadratic(double tau) {
    RhoFunction r;
    r.kind = Kind::TruncatedQuadratic;
    r.tau = tau;
    r.validate();
    return r;
  }
  static RhoFunction truncated_lp(double p, double tau, double T) {
    RhoFunction r;
    r.kind = Kind::TruncatedLp;
    r.p = p;
    r.tau = tau;
    r.T = T;
    r.validate();
    return r;
  }
  static RhoFunction cosine() {
    RhoFunction r;
    r.kind = Kind::CosineDerived;
    return r;
  }
  static RhoFunction absolute(double gamma_cap = 1e6) {
    RhoFunction r;
    r.kind = Kind::Absolute;
    r.gamma_cap = gamma_cap;
    r.validate();
    return r;
  }

  void validate() const {
    switch (kind) {
      case Kind::Identity:
      case Kind::CosineDerived: break;
      case Kind::Log: require(eps > 0.0, "log rho: eps must be positive"); break;
      case Kind::TruncatedQuadratic: require(tau >= 0.0, "truncated quadratic: tau must be >= 0"); break;
      case Kind::TruncatedLp:
        require(p > 0.0 && p <= 2.0, "truncated lp: need 0 < p <= 2");
        require(tau > 0.0 && tau <= T, "truncated lp: need 0 < tau <= T");
        break;
      case Kind::Absolute: require(gamma_cap > 0.0, "absolute rho: gamma cap must be positive"); break;
    }
  }

  bool is_identity() const { return kind == Kind::Identity; }

  double tau_bar() const { return std::pow(tau, 2.0 - p); }
  double T_bar() const { return std::pow(T, 2.0 - p); }
};

inline double rho_eval(const RhoFunction& rho, double zsq) {
  require(zsq >= 0.0 || rho.is_identity(), "rho_eval: zsq must be non-negative");
  using K = RhoFunction::Kind;
  switch (rho.kind) {
    case K::Identity: return zsq;
    case K::Log: return std::log(zsq + rho.eps);
    case K::TruncatedQuadratic: return std::min(zsq, rho.tau * rho.tau);
    case K::TruncatedLp: {
      const double z = std::sqrt(zsq);
      const double tb = rho.tau_bar(), Tb = rho.T_bar(), p = rho.p;
      const double rho0 = (2.0 - p) / p * std::pow(tb, p);
      if (z < tb) return std::pow(tb, p - 2.0) * zsq;
      if (z > Tb) return 2.0 / p * std::pow(Tb, p) - rho0;
      return 2.0 / p * std::pow(z, p) - rho0;
    }
    case K::CosineDerived: return zsq - zsq * zsq / 8.0;
    case K::Absolute: return std::sqrt(zsq);
  }
  return 0.0;
}

// d rho / d zsq. CosineDerived turns negative past zsq = 4; callers that
// need an attention weight use gamma_of() which clamps at zero.
inline double rho_grad(const RhoFunction& rho, double zsq) {
  using K = RhoFunction::Kind;
  switch (rho.kind) {
    case K::Identity: return 1.0;
    case K::Log: return 1.0 / (zsq + rho.eps);
    case K::TruncatedQuadratic: return std::sqrt(zsq) < rho.tau ? 1.0 : 0.0;
    case K::TruncatedLp: {
      const double z = std::sqrt(zsq);
      const double tb = rho.tau_bar(), Tb = rho.T_bar();
      if (z < tb) return std::pow(tb, rho.p - 2.0);
      if (z > Tb) return 0.0;
      return std::pow(z, rho.p - 2.0);
    }
    case K::CosineDerived: return 1.0 - zsq / 4.0;
    case K::Absolute: {
      const double z = std::sqrt(zsq);
      return z > 0.0 ? std::min(rho.gamma_cap, 0.5 / z) : rho.gamma_cap;
    }
  }
  return 0.0;
}

// d^2 rho / d zsq^2, zero on flat and capped pieces.
inline double rho_hess(const RhoFunction& rho, double zsq) {
  using K = RhoFunction::Kind;
  switch (rho.kind) {
    case K::Identity:
    case K::TruncatedQuadratic: return 0.0;
    case K::Log: return -1.0 / ((zsq + rho.eps) * (zsq + rho.eps));
    case K::TruncatedLp: {
      const double z = std::sqrt(zsq);
      if (z < rho.tau_bar() || z > rho.T_bar()) return 0.0;
      return 0.5 * (rho.p - 2.0) * std::pow(zsq, 0.5 * rho.p - 2.0);
    }
    case K::CosineDerived: return -0.25;
    case K::Absolute: {
      const double z = std::sqrt(zsq);
      if (z == 0.0 || 0.5 / z > rho.gamma_cap) return 0.0;
      return -0.25 / (zsq * z);
    }
  }
  return 0.0;
}

// Attention weight: rho_grad clamped to be non-negative.
inline double gamma_of(const RhoFunction& rho, double zsq) {
  return std::max(0.0, rho_grad(rho, zsq));
}

// Derivative of gamma_of in zsq.
inline double gamma_slope(const RhoFunction& rho, double zsq) {
  return rho_grad(rho, zsq) > 0.0 ? rho_hess(rho, zsq) : 0.0;
}

// Supremum of the attention weight over zsq >= 0.
inline double gamma_max(const RhoFunction& rho) {
  using K = RhoFunction::Kind;
  switch (rho.kind) {
    case K::Identity:
    case K::TruncatedQuadratic:
    case K::CosineDerived: return 1.0;
    case K::Log: return 1.0 / rho.eps;
    case K::TruncatedLp: return std::pow(rho.tau_bar(), rho.p - 2.0);
    case K::Absolute: return rho.gamma_cap;
  }
  return 1.0;
}

// Breakpoints in zsq where rho_grad jumps or rho_hess is discontinuous.
inline std::vector<double> rho_breakpoints(const RhoFunction& rho) {
  using K = RhoFunction::Kind;
  switch (rho.kind) {
    case K::TruncatedQuadratic: return {rho.tau * rho.tau};
    case K::TruncatedLp: return {rho.tau_bar() * rho.tau_bar(), rho.T_bar() * rho.T_bar()};
    case K::CosineDerived: return {4.0};
    case K::Absolute: return {0.25 / (rho.gamma_cap * rho.gamma_cap)};
    default: return {};
  }
}

inline std::string to_string(const RhoFunction& rho) {
  using K = RhoFunction::Kind;
  using detail::fmt;
  switch (rho.kind) {
    case K::Identity: return "identity";
    case K::Log: return "log:eps=" + fmt(rho.eps);
    case K::TruncatedQuadratic: return "truncated_quadratic:tau=" + fmt(rho.tau);
    case K::TruncatedLp:
      return "truncated_lp:p=" + fmt(rho.p) + ",tau=" + fmt(rho.tau) + ",T=" + fmt(rho.T);
    case K::CosineDerived: return "cosine";
    case K::Absolute: return "absolute:gamma_max=" + fmt(rho.gamma_cap);
  }
  return "?";
}

inline RhoFunction parse_rho(const std::string& text) {
  auto ps = detail::parse_param_string(text);
  RhoFunction r;
  if (ps.name == "identity") {
    r = RhoFunction::identity();
  } else if (ps.name == "log") {
    r = RhoFunction::log(detail::take(ps, "eps", 1.0));
  } else if (ps.name == "truncated_quadratic") {
    r = RhoFunction::truncated_quadratic(detail::take(ps, "tau", 1.0));
  } else if (ps.name == "truncated_lp") {
    double p = detail::take(ps, "p", 0.1);
    double tau = detail::take(ps, "tau", 0.2);
    double T = detail::take(ps, "T", 2.0);
    r = RhoFunction::truncated_lp(p, tau, T);
  } else if (ps.name == "cosine") {
    r = RhoFunction::cosine();
  } else if (ps.name == "absolute") {
    r = RhoFunction::absolute(detail::take(ps, "gamma_max", 1e6));
  } else {
    throw InvalidArgument("unknown rho '" + ps.name + "'");
  }
  detail::reject_leftovers(ps);
  return r;
}

struct ConcavityViolation {
  double zsq = 0.0;
  std::string what;
};

struct ConcavityReport {
  bool pass = true;
  std::vector<ConcavityViolation> violations;
};

inline ConcavityReport check_concavity(const RhoFunction& rho, std::span<const double> grid,
                                       double tol = 1e-12) {
  ConcavityReport report;
  double previous = std::numeric_limits<double>::infinity();
  for (double zsq : grid) {
    require(zsq >= 0.0, "check_concavity: grid points must be non-negative");
    const double g = rho_grad(rho, zsq);
    if (g < -tol) report.violations.push_back({zsq, "negative gradient"});
    if (g > previous + tol) report.violations.push_back({zsq, "increasing gradient"});
    previous = g;
  }
  report.pass = report.violations.empty();
  return report;
}

inline std::vector<double> linspace(double lo, double hi, int count) {
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    out[i] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
  }
  return out;
}

// Node-wise penalty phi and its proximal operator.
struct PhiFunction {
  enum class Kind { Zero, NonnegativeIndicator, SoftThreshold };

  Kind kind = Kind::Zero;
  double kappa = 0.0;

  static PhiFunction zero() { return {}; }
  static PhiFunction relu() { return {Kind::NonnegativeIndicator, 0.0}; }
  static PhiFunction soft_threshold(double kappa) {
    require(kappa >= 0.0, "soft threshold: kappa must be >= 0");
    return {Kind::SoftThreshold, kappa};
  }

  bool is_zero() const { return kind == Kind::Zero; }
};

inline double prox_scalar(const PhiFunction& phi, double u, double alpha) {
  switch (phi.kind) {
    case PhiFunction::Kind::Zero: return u;
    case PhiFunction::Kind::NonnegativeIndicator: return u > 0.0 ? u : 0.0;
    case PhiFunction::Kind::SoftThreshold: {
      const double shrunk = std::abs(u) - alpha * phi.kappa;
      return shrunk > 0.0 ? std::copysign(shrunk, u) : 0.0;
    }
  }
  return u;
}

// Derivative of the prox in its argument; 0 at the kinks.
inline double prox_slope(const PhiFunction& phi, double u, double alpha) {
  switch (phi.kind) {
    case PhiFunction::Kind::Zero: return 1.0;
    case PhiFunction::Kind::NonnegativeIndicator: return u > 0.0 ? 1.0 : 0.0;
    case PhiFunction::Kind::SoftThreshold: return std::abs(u) > alpha * phi.kappa ? 1.0 : 0.0;
  }
  return 1.0;
}

template <class Derived>
Matrix prox_apply(const PhiFunction& phi, const Eigen::MatrixBase<Derived>& u, double alpha) {
  require(alpha > 0.0, "prox: alpha must be positive");
  return u.unaryExpr([&](double x) { return prox_scalar(phi, x, alpha); });
}

inline Matrix prox_slope(const PhiFunction& phi, const Matrix& u, double alpha) {
  return u.unaryExpr([&](double x) { return prox_slope(phi, x, alpha); });
}

// Sum over nodes of phi(y_i).
inline double phi_eval(const PhiFunction& phi, const Matrix& y) {
  switch (phi.kind) {
    case PhiFunction::Kind::Zero: return 0.0;
    case PhiFunction::Kind::NonnegativeIndicator:
      return (y.array() < 0.0).any() ? std::numeric_limits<double>::infinity() : 0.0;
    case PhiFunction::Kind::SoftThreshold: return phi.kappa * y.cwiseAbs().sum();
  }
  return 0.0;
}

inline std::string to_string(const PhiFunction& phi) {
  switch (phi.kind) {
    case PhiFunction::Kind::Zero: return "zero";
    case PhiFunction::Kind::NonnegativeIndicator: return "relu";
    case PhiFunction::Kind::SoftThreshold: return "soft_threshold:kappa=" + detail::fmt(phi.kappa);
  }
  return "?";
}

inline PhiFunction parse_phi(const std::string& text) {
  auto ps = detail::parse_param_string(text);
  PhiFunction phi;
  if (ps.name == "zero" || ps.name == "identity") {
    phi = PhiFunction::zero();
  } else if (ps.name == "relu" || ps.name == "nonnegative") {
    phi = PhiFunction::relu();
  } else if (ps.name == "soft_threshold") {
    phi = PhiFunction::soft_threshold(detail::take(ps, "kappa", 0.1));
  } else {
    throw InvalidArgument("unknown phi '" + ps.name + "'");
  }
  detail::reject_leftovers(ps);
  return phi;
}

// Parameterization of the energy
//   ||Y - fX||^2_{W_f} + sum_k rho([B Y W_p Y^T B^T]_kk) + sum_i phi(y_i).
// In simple mode W_f = I and the edge term is lambda * sum_k rho(||(BY)_k||^2).
struct EnergySpec {
  Matrix w_f;
  Matrix w_p;
  double lambda = 1.0;
  LaplacianKind laplacian_kind = LaplacianKind::Combinatorial;
  RhoFunction rho;
  PhiFunction phi;
  bool simple_mode = true;

  static EnergySpec simple(double lambda, LaplacianKind kind = LaplacianKind::Combinatorial,
                           RhoFunction rho = {}, PhiFunction phi = {}) {
    require(lambda >= 0.0, "lambda must be non-negative");
    EnergySpec s;
    s.lambda = lambda;
    s.laplacian_kind = kind;
    s.rho = rho;
    s.phi = phi;
    s.simple_mode = true;
    return s;
  }

  static EnergySpec general(Matrix w_f, Matrix w_p, LaplacianKind kind = LaplacianKind::Combinatorial,
                            RhoFunction rho = {}, PhiFunction phi = {}) {
    require(w_f.rows() == w_f.cols() && w_p.rows() == w_p.cols() && w_f.rows() == w_p.rows(),
            "W_f and W_p must be square with equal size");
    require(w_f.allFinite() && w_p.allFinite(), "W_f and W_p must be finite");
    EnergySpec s;
    s.w_f = std::move(w_f);
    s.w_p = std::move(w_p);
    s.laplacian_kind = kind;
    s.rho = rho;
    s.phi = phi;
    s.simple_mode = false;
    return s;
  }

  // W_f + W_f^T and W_p + W_p^T.
  Matrix w_f_sym() const { return w_f + w_f.transpose(); }
  Matrix w_p_sym() const { return w_p + w_p.transpose(); }

  void check_dims(Index d) const {
    if (simple_mode) return;
    if (w_f.rows() != d) {
      throw InvalidArgument("energy weights are " + shape_string(w_f.rows(), w_f.cols()) +
                            " but embeddings have width " + std::to_string(d));
    }
  }
};

struct EnergyValue {
  double fidelity = 0.0;
  double smoothness = 0.0;
  double phi_term = 0.0;
  double total = 0.0;
};

// Per-edge argument of rho: ||(BY)_k||^2 in simple mode, (BY)_k W_p (BY)_k^T
// otherwise. For non-identity rho the values must be >= -1e-12 and are
// clamped at zero.
inline Vector edge_quadratic(const EnergySpec& spec, const IncidenceView& view, const Matrix& y) {
  const Matrix by = view.apply(y);
  Vector q;
  if (spec.simple_mode) {
    q = by.rowwise().squaredNorm();
  } else {
    q = (by * spec.w_p).cwiseProduct(by).rowwise().sum();
  }
  op_counter().edge_flops += static_cast<std::uint64_t>(2 * by.size());
  if (!spec.rho.is_identity()) {
    for (Index k = 0; k < q.size(); ++k) {
      if (q[k] < -1e-12) {
        throw NumericalError("edge " + std::to_string(k) + " has negative quadratic form " +
                             detail::fmt(q[k]) + "; W_p must be PSD for a robust rho");
      }
      q[k] = std::max(q[k], 0.0);
    }
  }
  return q;
}

inline EnergyValue energy_eval(const EnergySpec& spec, const IncidenceView& view, const Matrix& y,
                               const Matrix& fx) {
  require(y.rows() == fx.rows() && y.cols() == fx.cols(), "energy: Y and fX shapes differ");
  require(y.rows() == view.cols(), "energy: Y rows must equal node count");
  spec.check_dims(y.cols());
  EnergyValue e;
  const Matrix diff = y - fx;
  e.fidelity = spec.simple_mode ? diff.squaredNorm() : (diff * spec.w_f).cwiseProduct(diff).sum();
  const Vector q = edge_quadratic(spec, view, y);
  double smooth = 0.0;
  for (Index k = 0; k < q.size(); ++k) smooth += rho_eval(spec.rho, q[k]);
  e.smoothness = spec.simple_mode ? spec.lambda * smooth : smooth;
  e.phi_term = phi_eval(spec.phi, y);
  e.total = e.fidelity + e.smoothness + e.phi_term;
  return e;
}

inline EnergyValue energy_eval(const EnergySpec& spec, const Graph& g, const Matrix& y,
                               const Matrix& fx) {
  return energy_eval(spec, incidence(g, spec.laplacian_kind), y, fx);
}

}  // namespace gprop
