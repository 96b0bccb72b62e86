#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixture.hpp"
#include "netred/error.hpp"
#include "netred/optimizer.hpp"

using namespace netred;
using namespace netred::opt;

namespace {

Matrix random_matrix(int r, int c, std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

NetworkSystem random_system(std::vector<int> sizes, int m, int p, unsigned seed) {
  std::mt19937 rng(seed);
  NetworkSystem sys;
  int n = 0;
  for (int k : sizes) n += k;
  Matrix A = random_matrix(n, n, rng);
  A.diagonal().array() -= linalg::spectrum(A).max_real_part + 1.0;
  sys.A = A;
  sys.B = random_matrix(n, m, rng);
  sys.C = random_matrix(p, n, rng);
  sys.topology = Topology::full(std::move(sizes), m, p);
  return sys;
}

// Structured stable (S, G) near diag(-1, ..., -nu), with sigma(S) kept 0.3
// away from sigma(A) so Pi(S) is well conditioned.
std::pair<Matrix, Matrix> random_point(const NetworkSystem& sys, const Matrix& L,
                                       const ReducedOrders& orders, unsigned seed) {
  std::mt19937 rng(seed);
  const int nu = orders.total();
  const linalg::Spectrum spA = linalg::spectrum(sys.A);
  for (;;) {
    Matrix S = random_matrix(nu, nu, rng, 0.3);
    for (int i = 0; i < nu; ++i) S(i, i) -= 1.0 + i;
    Matrix G = random_matrix(nu, sys.m(), rng, 0.5);
    rezero(S, G, L, sys.topology, orders, false);
    const double mr = linalg::spectrum(S - G * L).max_real_part;
    if (mr > -0.5) S.diagonal().array() -= mr + 0.5;
    rezero(S, G, L, sys.topology, orders, false);
    if (linalg::closest_eigenvalue_pair(spA, linalg::spectrum(S)).distance >= 0.3)
      return {S, G};
  }
}

double max_rel_error(const GradientPair& a, const Matrix& gS, const Matrix& gG) {
  double worst = 0.0;
  auto cmp = [&](const Matrix& x, const Matrix& y) {
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j)
        if (std::abs(y(i, j)) > 1e-8)
          worst = std::max(worst, std::abs(x(i, j) - y(i, j)) / std::abs(y(i, j)));
  };
  cmp(a.S, gS);
  cmp(a.G, gG);
  return worst;
}

double fd_step(const Matrix& S, const Matrix& G) {
  return 1e-6 * (1.0 + std::sqrt(S.squaredNorm() + G.squaredNorm()));
}

}  // namespace

TEST(Objective, MatchesErrorSystemNorm) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const ReducedOrders orders = fixtures::fixture_orders();
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto [S, G] = random_point(sys, L, orders, seed);
    const ReducedNetwork red = build_reduced(sys, S, G, L, orders);
    const double h2 = h2_norm(error_realization(sys, red));
    const ObjectiveEval ev = objective(sys, S, G, L, red.Pi);
    EXPECT_NEAR(ev.f, h2 * h2, 1e-10 * h2 * h2);
    // Same value from the untransformed Gramian.
    Matrix Be(sys.n() + 4, 1);
    Be << sys.B, G;
    EXPECT_NEAR((Be.transpose() * ev.M * Be).trace(), ev.f, 1e-10 * ev.f);
    EXPECT_GE(linalg::min_symmetric_eigenvalue(ev.M), -1e-12 * ev.M.norm());
    const Objective tracking(sys, L, PiMode::kTracking);
    EXPECT_NEAR(tracking.value(S, G), ev.f, 1e-12 * ev.f);
  }
}

TEST(Objective, FixedPiUsesGivenOutputMatrix) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const auto [S, G] = random_point(sys, L, fixtures::fixture_orders(), 3);
  Matrix grid = Matrix::Zero(4, 4);
  grid.diagonal() << 1.0, 2.0, 3.0, 4.0;
  const Matrix Pi = compute_pi(sys, grid, L);
  const double h2 = h2_norm(error_realization(sys, S - G * L, G, sys.C * Pi));
  EXPECT_NEAR(objective(sys, S, G, L, Pi).f, h2 * h2, 1e-10 * h2 * h2);
}

TEST(Objective, ScalarClosedForm) {
  NetworkSystem sys;
  sys.A = Matrix::Constant(1, 1, -1.0);
  sys.B = Matrix::Constant(1, 1, 1.0);
  sys.C = Matrix::Constant(1, 1, 1.0);
  sys.topology = Topology::full({1}, 1, 1);
  const Matrix S = Matrix::Constant(1, 1, 1.0);
  const Matrix L = Matrix::Constant(1, 1, 1.0);
  for (double g : {1.5, 3.0, 10.0}) {
    // Pi = 1/2; error 1/(s+1) - (g/2)/(s+g-1), a sum of two real poles.
    const double c1 = 1.0, p1 = 1.0, c2 = -0.5 * g, p2 = g - 1.0;
    const double want = c1 * c1 / (2 * p1) + 2 * c1 * c2 / (p1 + p2) + c2 * c2 / (2 * p2);
    const Objective obj(sys, L, PiMode::kTracking);
    EXPECT_NEAR(obj.value(S, Matrix::Constant(1, 1, g)), want, 1e-13);
  }
}

TEST(Objective, ZeroOutputGivesZero) {
  NetworkSystem sys = fixtures::fixture_network();
  sys.C.setZero();
  const Matrix L = fixtures::fixture_L();
  const auto [S, G] = random_point(sys, L, fixtures::fixture_orders(), 4);
  for (PiMode mode : {PiMode::kFixed, PiMode::kTracking}) {
    const Objective obj(sys, L, mode, compute_pi(sys, S, L));
    const ObjectiveEval ev = obj.evaluate(S, G, true);
    EXPECT_EQ(ev.f, 0.0);
    EXPECT_EQ(ev.gradS.norm(), 0.0);
    EXPECT_EQ(ev.gradG.norm(), 0.0);
  }
}

TEST(Objective, UnstablePointThrows) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const Matrix S = Matrix::Identity(4, 4);
  const Objective obj(sys, L, PiMode::kTracking);
  try {
    obj.evaluate(S, Matrix::Zero(4, 1), false);
    FAIL() << "expected kUnstable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnstable);
  }
  EXPECT_FALSE(obj.try_value(S, Matrix::Zero(4, 1), 1e-9).has_value());
}

TEST(Gradient, VanishesAtExactOrderPoint) {
  const NetworkSystem sys = random_system({2, 2}, 2, 1, 5);
  std::mt19937 rng(9);
  const Matrix L = random_matrix(2, 4, rng);
  const Matrix S = sys.A + sys.B * L;
  const ReducedOrders orders{{2, 2}};
  const Matrix Pi = compute_pi(sys, S, L);
  const double k = h2_norm(sys.A, sys.B, sys.C);
  for (PiMode mode : {PiMode::kFixed, PiMode::kTracking}) {
    const ObjectiveEval ev = Objective(sys, L, mode, Pi).evaluate(S, sys.B, true);
    EXPECT_LE(ev.f, 1e-18 * k * k);
    EXPECT_LE(ev.gradS.norm(), 1e-7);
    EXPECT_LE(ev.gradG.norm(), 1e-7);
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnFixture) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const ReducedOrders orders = fixtures::fixture_orders();
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const auto [S, G] = random_point(sys, L, orders, seed);
    for (PiMode mode : {PiMode::kFixed, PiMode::kTracking}) {
      const Objective obj(sys, L, mode, compute_pi(sys, S, L));
      const ObjectiveEval ev = obj.evaluate(S, G, true);
      const GradientPair fd = finite_diff_gradient(obj, S, G, fd_step(S, G));
      EXPECT_LE(max_rel_error(fd, ev.gradS, ev.gradG), 1e-5)
          << "seed " << seed << (mode == PiMode::kFixed ? " fixed" : " tracking");
    }
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomNetwork) {
  const NetworkSystem sys = random_system({3, 3, 2}, 2, 2, 21);
  const ReducedOrders orders{{1, 1, 1}};
  std::mt19937 rng(4);
  const Matrix L = random_matrix(2, 3, rng);
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const auto [S, G] = random_point(sys, L, orders, 100 + seed);
    for (PiMode mode : {PiMode::kFixed, PiMode::kTracking}) {
      const Objective obj(sys, L, mode, compute_pi(sys, S, L));
      const ObjectiveEval ev = obj.evaluate(S, G, true);
      const GradientPair fd = finite_diff_gradient(obj, S, G, fd_step(S, G));
      EXPECT_LE(max_rel_error(fd, ev.gradS, ev.gradG), 1e-5) << "seed " << seed;
    }
  }
}

TEST(Gradient, FiniteDifferencesExactOnQuadratic) {
  // B = 0: only the reduced branch carries signal and f is quadratic in G.
  NetworkSystem sys;
  sys.A = Matrix::Constant(1, 1, -1.0);
  sys.B = Matrix::Zero(1, 1);
  sys.C = Matrix::Constant(1, 1, 1.0);
  sys.topology = Topology::full({1}, 1, 1);
  const Matrix L = Matrix::Zero(1, 1);
  const Matrix Pi = Matrix::Constant(1, 1, 2.0);
  const Objective obj(sys, L, PiMode::kFixed, Pi);
  const Matrix S = Matrix::Constant(1, 1, -3.0);
  const Matrix G = Matrix::Constant(1, 1, 0.7);
  // f = (C Pi)^2 g^2 / (2 * 3)
  EXPECT_NEAR(obj.value(S, G), 4.0 * 0.49 / 6.0, 1e-14);
  const GradientPair fd = finite_diff_gradient(obj, S, G, 1e-3);
  EXPECT_NEAR(fd.G(0, 0), 4.0 * 0.7 / 3.0, 1e-10);
  EXPECT_NEAR(obj.evaluate(S, G, true).gradG(0, 0), 4.0 * 0.7 / 3.0, 1e-12);
}

namespace {

// Two scalar subsystems, subsystem 0 must not see subsystem 1.
Topology two_node_topology(bool input_mask) {
  Topology t;
  t.N = 2;
  t.sizes = {1, 1};
  t.state_neighbors = {{0}, {0, 1}};
  t.m = 2;
  t.p = 1;
  if (input_mask) {
    t.input_neighbors = IndexSets{{0}, {1}};
    t.input_sizes = {1, 1};
  }
  return t;
}

}  // namespace

TEST(Projection, FullTopologyIsIdentity) {
  const Topology t = Topology::full({2, 1}, 1, 1);
  std::mt19937 rng(1);
  const Matrix gS = random_matrix(3, 3, rng), gG = random_matrix(3, 1, rng);
  const Matrix L = random_matrix(1, 3, rng);
  const GradientPair p = project_gradient(gS, gG, t, ReducedOrders{{2, 1}}, L, false);
  EXPECT_TRUE(p.S == gS);
  EXPECT_TRUE(p.G == gG);
}

TEST(Projection, ForbiddenBlockFollowsInputGradient) {
  const Topology t = two_node_topology(false);
  const ReducedOrders orders{{1, 1}};
  const Matrix L = Matrix::Identity(2, 2);
  std::mt19937 rng(2);
  const Matrix gS = random_matrix(2, 2, rng), gG = random_matrix(2, 2, rng);
  const GradientPair p = project_gradient(gS, gG, t, orders, L, false);
  EXPECT_EQ(p.S(0, 1), p.G(0, 1));
  EXPECT_EQ(p.S(0, 0), gS(0, 0));
  EXPECT_EQ(p.S(1, 0), gS(1, 0));
  EXPECT_TRUE(p.G == gG);

  Matrix S = random_matrix(2, 2, rng), G = random_matrix(2, 2, rng);
  S(0, 1) = G(0, 1);
  const double before = (S - G * L)(0, 1);
  S -= 0.3 * p.S;
  G -= 0.3 * p.G;
  EXPECT_NEAR((S - G * L)(0, 1), before, 1e-15);
}

TEST(Projection, InputMaskAppliedFirst) {
  const Topology t = two_node_topology(true);
  const ReducedOrders orders{{1, 1}};
  std::mt19937 rng(3);
  const Matrix L = random_matrix(2, 2, rng);
  const Matrix gS = random_matrix(2, 2, rng), gG = random_matrix(2, 2, rng);
  const GradientPair p = project_gradient(gS, gG, t, orders, L, true);
  EXPECT_EQ(p.G(0, 1), 0.0);
  EXPECT_EQ(p.G(1, 0), 0.0);
  EXPECT_EQ(p.G(0, 0), gG(0, 0));
  EXPECT_EQ(p.S(0, 1), (p.G * L)(0, 1));
  EXPECT_NE(p.S(0, 1), (gG * L)(0, 1));
}

TEST(LineSearch, RejectsUnstableCandidates) {
  NetworkSystem sys;
  sys.A = Matrix::Constant(1, 1, -1.0);
  sys.B = Matrix::Constant(1, 1, 1.0);
  sys.C = Matrix::Constant(1, 1, 1.0);
  sys.topology = Topology::full({1}, 1, 1);
  const Matrix L = Matrix::Constant(1, 1, 1.0);
  const ReducedOrders orders{{1}};
  const Objective obj(sys, L, PiMode::kFixed, Matrix::Constant(1, 1, 0.5));
  // Reduced pole at -0.3 with a small gain: descent pushes the pole right.
  const Matrix S = Matrix::Constant(1, 1, -0.2);
  const Matrix G = Matrix::Constant(1, 1, 0.1);
  const ObjectiveEval ev = obj.evaluate(S, G, true);
  ASSERT_LT(ev.gradS(0, 0), 0.0);
  OptimizerConfig cfg;
  // Move the pole only; a G step could offset it.
  const GradientPair d{ev.gradS, Matrix::Zero(1, 1)};
  const LineSearchResult r = line_search(obj, S, G, ev.f, d, 100.0, cfg, sys.topology, orders);
  ASSERT_TRUE(r.accepted);
  EXPECT_GT(r.unstable_rejections, 0);
  EXPECT_GT(r.backtracks, 0);
  EXPECT_LT((r.S - r.G * L)(0, 0), 0.0);
  EXPECT_LE(r.f, ev.f - cfg.armijo_c * r.step * (d.S.squaredNorm() + d.G.squaredNorm()));
}

TEST(LineSearch, SmallTrialStepAcceptedImmediately) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const ReducedOrders orders = fixtures::fixture_orders();
  const auto [S, G] = random_point(sys, L, orders, 6);
  const Objective obj(sys, L, PiMode::kTracking);
  const ObjectiveEval ev = obj.evaluate(S, G, true);
  const GradientPair d = project_gradient(ev.gradS, ev.gradG, sys.topology, orders, L, false);
  const double trial = 1e-3 / std::sqrt(d.S.squaredNorm() + d.G.squaredNorm());
  const LineSearchResult r = line_search(obj, S, G, ev.f, d, trial, OptimizerConfig{},
                                         sys.topology, orders);
  ASSERT_TRUE(r.accepted);
  EXPECT_EQ(r.backtracks, 0);
  EXPECT_TRUE(structure_violations(r.S - r.G * L, sys.topology, orders).empty());
}

TEST(Optimize, StopsImmediatelyAtGlobalMinimum) {
  const NetworkSystem sys = random_system({2, 2}, 2, 1, 5);
  std::mt19937 rng(9);
  const Matrix L = random_matrix(2, 4, rng);
  const Matrix S = sys.A + sys.B * L;
  const ReducedOrders orders{{2, 2}};
  OptimizerConfig cfg;
  cfg.pi_mode = PiMode::kTracking;
  const OptimizerReport rep = optimize(sys, S, sys.B, L, orders, Matrix{}, cfg);
  EXPECT_EQ(rep.termination, Termination::kConverged);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_LE(rep.gradmap_history.back(), cfg.epsilon);
}

TEST(Optimize, MonotoneDescentOnToyNetwork) {
  const NetworkSystem sys = random_system({2, 2}, 1, 1, 13);
  const ReducedOrders orders{{1, 1}};
  const Matrix L = Matrix::Constant(1, 2, 1.0);
  // sigma(A) lies left of -1 here, so the usual -1, -2 start would collide.
  Matrix S0 = Matrix::Zero(2, 2);
  S0.diagonal() << -0.5, -0.7;
  const Matrix G0 = Matrix::Zero(2, 1);
  for (PiMode mode : {PiMode::kFixed, PiMode::kTracking}) {
    OptimizerConfig cfg;
    cfg.pi_mode = mode;
    cfg.max_iter = 400;
    const Matrix Pi = compute_pi(sys, S0, L);
    const OptimizerReport rep = optimize(sys, S0, G0, L, orders, Pi, cfg);
    ASSERT_GT(rep.iterations, 0) << rep.message;
    for (std::size_t k = 1; k < rep.f_history.size(); ++k)
      EXPECT_LE(rep.f_history[k], rep.f_history[k - 1]);
    EXPECT_LT(rep.f_history.back(), rep.f_history.front());
    EXPECT_GE(rep.descent_constant, cfg.armijo_c);
    // min |Gamma|^2 <= (f0 - f_final) / (Delta * min step * k)
    double min_g = INFINITY, min_step = INFINITY;
    for (int k = 0; k < rep.iterations; ++k) min_g = std::min(min_g, rep.gradmap_history[k]);
    for (double s : rep.step_sizes) min_step = std::min(min_step, s);
    EXPECT_LE(min_g * min_g, (rep.f_history.front() - rep.f_history.back()) /
                                 (rep.descent_constant * min_step * rep.iterations) *
                                 (1.0 + 1e-9));
    EXPECT_TRUE(linalg::is_hurwitz(rep.S - rep.G * L, cfg.stability_margin));
  }
}

TEST(Optimize, FixtureIteratesStayStructured) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const ReducedOrders orders = fixtures::fixture_orders();
  const auto [S0, G0] = fallback_start(4, 1);
  OptimizerConfig cfg;
  cfg.pi_mode = PiMode::kTracking;
  cfg.max_iter = 200;
  const OptimizerReport rep = optimize(sys, S0, G0, L, orders, Matrix{}, cfg);
  EXPECT_NE(rep.termination, Termination::kStalled) << rep.message;
  EXPECT_LT(rep.f_history.back(), 0.5 * rep.f_history.front());
  const Matrix F = rep.S - rep.G * L;
  EXPECT_EQ(F(0, 3), 0.0);
  EXPECT_EQ(F(1, 3), 0.0);
  EXPECT_EQ(F(3, 0), 0.0);
  EXPECT_EQ(F(3, 1), 0.0);
  ASSERT_TRUE(rep.constraints.has_value());
  EXPECT_TRUE(rep.constraints->hard_passed());
  const ReducedNetwork red = build_reduced(sys, rep.S, rep.G, L, orders);
  const double h2 = h2_norm(error_realization(sys, red));
  EXPECT_NEAR(rep.final_eval.f, h2 * h2, 1e-10 * h2 * h2);
}

TEST(Optimize, RejectsBadStart) {
  const NetworkSystem sys = fixtures::fixture_network();
  const Matrix L = fixtures::fixture_L();
  const ReducedOrders orders = fixtures::fixture_orders();
  OptimizerConfig cfg;
  cfg.pi_mode = PiMode::kTracking;
  Matrix S = Matrix::Identity(4, 4);
  try {
    optimize(sys, S, Matrix::Zero(4, 1), L, orders, Matrix{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnstable);
  }
  S = -Matrix::Identity(4, 4);
  S(3, 0) = 0.2;
  try {
    optimize(sys, S, Matrix::Zero(4, 1), L, orders, Matrix{}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kStructure);
  }
  cfg.armijo_c = 1.5;
  EXPECT_THROW(validate(cfg), Error);
}
