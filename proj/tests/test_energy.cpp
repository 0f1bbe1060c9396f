// Penalty families, proximal operators and energy evaluation.

#include "gprop/energy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

namespace gprop {
namespace {

using testing::dense;
using testing::random_graph;

// Direct transcription of the three-piece truncated l_p penalty, written
// against the reparameterized thresholds.
double truncated_lp_oracle(double p, double tau, double T, double zsq) {
  const double tb = std::pow(tau, 2 - p), Tb = std::pow(T, 2 - p);
  const double rho0 = (2 - p) / p * std::pow(tb, p);
  const double z = std::sqrt(zsq);
  if (z < tb) return std::pow(tb, p - 2) * z * z;
  if (z > Tb) return 2 / p * std::pow(Tb, p) - rho0;
  return 2 / p * std::pow(z, p) - rho0;
}

TEST(Rho, ClosedForms) {
  EXPECT_DOUBLE_EQ(rho_eval(RhoFunction::log(1.0), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(rho_eval(RhoFunction::cosine(), 4.0), 2.0);
  EXPECT_DOUBLE_EQ(rho_eval(RhoFunction::identity(), 3.5), 3.5);
  EXPECT_DOUBLE_EQ(rho_eval(RhoFunction::absolute(), 9.0), 3.0);
  EXPECT_DOUBLE_EQ(rho_eval(RhoFunction::truncated_quadratic(1.0), 4.0), 1.0);
}

TEST(Rho, TruncatedLpThreePieces) {
  const double p = 0.1, tau = 0.2, T = 2.0;
  RhoFunction r = RhoFunction::truncated_lp(p, tau, T);
  const double tb = r.tau_bar(), Tb = r.T_bar();
  ASSERT_LT(tb, Tb);
  for (double z : {0.5 * tb, 0.5 * (tb + Tb), 2.0 * Tb}) {
    EXPECT_NEAR(rho_eval(r, z * z), truncated_lp_oracle(p, tau, T, z * z), 1e-12);
  }
  // continuity at both breakpoints
  for (double b : {tb, Tb}) {
    EXPECT_NEAR(rho_eval(r, b * b * (1 - 1e-12)), rho_eval(r, b * b * (1 + 1e-12)), 1e-9);
  }
}

TEST(Rho, Gradients) {
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::log(1.0), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::absolute(), 4.0), 0.25);
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::cosine(), 0.0), 1.0);
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::truncated_quadratic(1.0), 4.0), 0.0);
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::truncated_quadratic(1.0), 0.25), 1.0);
  EXPECT_DOUBLE_EQ(rho_grad(RhoFunction::absolute(1e6), 0.0), 1e6);
}

TEST(Rho, GradientMatchesFiniteDifferences) {
  std::vector<RhoFunction> menu{RhoFunction::identity(), RhoFunction::log(0.5),
                                RhoFunction::truncated_quadratic(1.2),
                                RhoFunction::truncated_lp(0.1, 0.2, 2.0),
                                RhoFunction::truncated_lp(1.0, 0.5, 1.5), RhoFunction::cosine(),
                                RhoFunction::absolute()};
  const double h = 1e-6;
  for (const auto& r : menu) {
    auto breaks = rho_breakpoints(r);
    for (double s : linspace(0.01, 6.0, 300)) {
      bool near_break = false;
      for (double b : breaks) near_break |= std::abs(s - b) < 10 * h;
      if (near_break) continue;
      const double fd = (rho_eval(r, s + h) - rho_eval(r, s - h)) / (2 * h);
      EXPECT_NEAR(rho_grad(r, s), fd, 1e-6 * std::max(1.0, std::abs(fd))) << to_string(r) << " s=" << s;
      const double fd2 = (rho_grad(r, s + h) - rho_grad(r, s - h)) / (2 * h);
      EXPECT_NEAR(rho_hess(r, s), fd2, 1e-4 * std::max(1.0, std::abs(fd2))) << to_string(r) << " s=" << s;
    }
  }
}

TEST(Rho, AttentionRanges) {
  const auto grid = linspace(0.0, 50.0, 2001);
  RhoFunction lg = RhoFunction::log(0.5);
  RhoFunction tq = RhoFunction::truncated_quadratic(1.0);
  RhoFunction lp = RhoFunction::truncated_lp(0.1, 0.2, 2.0);
  for (double s : grid) {
    double g = rho_grad(lg, s);
    EXPECT_GT(g, 0.0);
    EXPECT_LE(g, 1.0 / 0.5);
    g = rho_grad(tq, s);
    EXPECT_TRUE(g == 0.0 || g == 1.0);
    g = rho_grad(lp, s);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, std::pow(lp.tau_bar(), lp.p - 2) * (1 + 1e-12));
  }
}

TEST(Rho, RejectsBadParameters) {
  EXPECT_THROW(RhoFunction::log(0.0), InvalidArgument);
  EXPECT_THROW(RhoFunction::truncated_lp(0.0, 0.2, 2.0), InvalidArgument);
  EXPECT_THROW(RhoFunction::truncated_lp(2.5, 0.2, 2.0), InvalidArgument);
  EXPECT_THROW(RhoFunction::truncated_lp(0.5, 3.0, 2.0), InvalidArgument);
}

TEST(Rho, ConfigStringRoundTrip) {
  RhoFunction r = parse_rho("truncated_lp:p=0.1,tau=0.2,T=2");
  EXPECT_EQ(r.kind, RhoFunction::Kind::TruncatedLp);
  EXPECT_DOUBLE_EQ(r.p, 0.1);
  EXPECT_DOUBLE_EQ(r.tau, 0.2);
  EXPECT_DOUBLE_EQ(r.T, 2.0);
  EXPECT_EQ(to_string(parse_rho(to_string(r))), to_string(r));
  EXPECT_EQ(parse_rho("identity").kind, RhoFunction::Kind::Identity);
  EXPECT_EQ(parse_rho("log:eps=0.5").eps, 0.5);
  EXPECT_THROW(parse_rho("quartic"), InvalidArgument);
  EXPECT_THROW(parse_rho("log:epsilon=1"), InvalidArgument);
  EXPECT_THROW(parse_rho("log:eps=abc"), InvalidArgument);
  EXPECT_EQ(parse_phi("relu").kind, PhiFunction::Kind::NonnegativeIndicator);
  EXPECT_DOUBLE_EQ(parse_phi("soft_threshold:kappa=0.3").kappa, 0.3);
}

TEST(Concavity, Reports) {
  EXPECT_TRUE(check_concavity(RhoFunction::log(0.1), linspace(0, 10, 500)).pass);
  EXPECT_TRUE(check_concavity(RhoFunction::cosine(), linspace(0, 4, 500)).pass);
  auto bad = check_concavity(RhoFunction::cosine(), linspace(0, 10, 500));
  EXPECT_FALSE(bad.pass);
  EXPECT_GT(bad.violations.front().zsq, 4.0);
  EXPECT_TRUE(check_concavity(RhoFunction::identity(), linspace(0, 10, 50)).pass);
  EXPECT_TRUE(check_concavity(RhoFunction::truncated_lp(0.1, 0.2, 2.0), linspace(0, 20, 2000)).pass);
  EXPECT_TRUE(check_concavity(RhoFunction::absolute(), linspace(0, 20, 2000)).pass);
}

TEST(Prox, Examples) {
  Vector u(2);
  u << -0.5, 0.7;
  Vector relu = prox_apply(PhiFunction::relu(), u, 1.0);
  EXPECT_DOUBLE_EQ(relu[0], 0.0);
  EXPECT_DOUBLE_EQ(relu[1], 0.7);
  EXPECT_EQ(Vector(prox_apply(PhiFunction::zero(), u, 1.0)), u);
  Vector v(2);
  v << 2.0, -0.5;
  Vector st = prox_apply(PhiFunction::soft_threshold(1.0), v, 1.0);
  EXPECT_DOUBLE_EQ(st[0], 1.0);
  EXPECT_DOUBLE_EQ(st[1], 0.0);
}

TEST(Prox, SoftThresholdMatchesGridMinimizer) {
  const double kappa = 0.7, alpha = 0.6;
  PhiFunction phi = PhiFunction::soft_threshold(kappa);
  for (double u : {-2.0, -0.3, 0.0, 0.2, 0.41, 1.5}) {
    double best = 0, best_val = 1e300;
    for (double y = -3; y <= 3; y += 1e-4) {
      double val = (u - y) * (u - y) / (2 * alpha) + kappa * std::abs(y);
      if (val < best_val) {
        best_val = val;
        best = y;
      }
    }
    EXPECT_NEAR(prox_scalar(phi, u, alpha), best, 2e-4);
  }
}

TEST(Prox, NonExpansiveAndMonotone) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0, 2);
  for (const auto& phi : {PhiFunction::zero(), PhiFunction::relu(), PhiFunction::soft_threshold(0.4)}) {
    for (int t = 0; t < 1000; ++t) {
      Vector a(4), b(4);
      for (int i = 0; i < 4; ++i) {
        a[i] = normal(rng);
        b[i] = normal(rng);
      }
      Vector pa = prox_apply(phi, a, 0.8), pb = prox_apply(phi, b, 0.8);
      EXPECT_LE((pa - pb).norm(), (a - b).norm() + 1e-15);
      const double lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
      EXPECT_LE(prox_scalar(phi, lo, 0.8), prox_scalar(phi, hi, 0.8));
    }
  }
}

TEST(Energy, FidelityVanishesAtBase) {
  Graph g = random_graph(10, 0.3, 1);
  Matrix y = Matrix::Random(10, 3);
  EnergySpec spec = EnergySpec::simple(1.0);
  EnergyValue e = energy_eval(spec, g, y, y);
  EXPECT_DOUBLE_EQ(e.fidelity, 0.0);
  Matrix l = dense(laplacian(g, LaplacianKind::Combinatorial));
  EXPECT_NEAR(e.total, (y.transpose() * l * y).trace(), 1e-12);
}

TEST(Energy, PathHandExpansion) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix y(2, 1);
  y << 1, 0;
  EnergyValue e = energy_eval(EnergySpec::simple(2.0), path, y, y);
  EXPECT_DOUBLE_EQ(e.total, 2.0);
}

TEST(Energy, IndicatorInfinite) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix y(2, 1);
  y << -1, 0;
  EnergySpec spec = EnergySpec::simple(1.0, LaplacianKind::Combinatorial, {}, PhiFunction::relu());
  EnergyValue e = energy_eval(spec, path, y, y);
  EXPECT_TRUE(std::isinf(e.phi_term));
  EXPECT_TRUE(std::isinf(e.total));
  y(0, 0) = 1;
  EXPECT_EQ(energy_eval(spec, path, y, y).phi_term, 0.0);
}

TEST(Energy, SimpleModeMatchesDenseFormula) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Graph g = random_graph(15, 0.2, seed);
    std::mt19937_64 rng(seed);
    Matrix y = testing::random_matrix(15, 4, rng), fx = testing::random_matrix(15, 4, rng);
    const double lambda = 0.3 * static_cast<double>(seed);
    for (auto kind : {LaplacianKind::Combinatorial, LaplacianKind::SelfLoopSymNormalized}) {
      Matrix l = dense(laplacian(g, kind));
      double oracle = (y - fx).squaredNorm() + lambda * (y.transpose() * l * y).trace();
      EnergyValue e = energy_eval(EnergySpec::simple(lambda, kind), g, y, fx);
      EXPECT_NEAR(e.total, oracle, 1e-10 * oracle);
      EXPECT_DOUBLE_EQ(e.total, e.fidelity + e.smoothness + e.phi_term);
    }
  }
}

TEST(Energy, GeneralModeMatchesTraceForm) {
  Graph g = random_graph(12, 0.3, 4);
  std::mt19937_64 rng(4);
  Matrix wf = testing::random_psd(3, rng), wp = testing::random_psd(3, rng);
  Matrix y = testing::random_matrix(12, 3, rng), fx = testing::random_matrix(12, 3, rng);
  Matrix l = dense(laplacian(g, LaplacianKind::Combinatorial));
  EnergyValue e = energy_eval(EnergySpec::general(wf, wp), g, y, fx);
  Matrix diff = y - fx;
  EXPECT_NEAR(e.fidelity, (diff * wf * diff.transpose()).trace(), 1e-10);
  EXPECT_NEAR(e.smoothness, (y.transpose() * l * y * wp).trace(), 1e-10);
}

TEST(Energy, ShapeMismatch) {
  Graph g = random_graph(5, 0.5, 1);
  EXPECT_THROW(energy_eval(EnergySpec::simple(1.0), g, Matrix::Zero(5, 2), Matrix::Zero(5, 3)),
               InvalidArgument);
  EXPECT_THROW(energy_eval(EnergySpec::general(Matrix::Identity(2, 2), Matrix::Identity(2, 2)), g,
                           Matrix::Zero(5, 3), Matrix::Zero(5, 3)),
               InvalidArgument);
}

TEST(Energy, NegativeQuadraticRejectedForRobustRho) {
  Graph path = build_graph(2, {{0, 1}});
  Matrix y(2, 1);
  y << 1, 0;
  EnergySpec spec = EnergySpec::general(Matrix::Identity(1, 1), -Matrix::Identity(1, 1),
                                        LaplacianKind::Combinatorial, RhoFunction::log(1.0));
  EXPECT_THROW(energy_eval(spec, path, y, y), NumericalError);
}

}  // namespace
}  // namespace gprop
