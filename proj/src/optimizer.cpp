#include "netred/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "netred/error.hpp"

namespace netred::opt {

namespace {

using linalg::LyapunovSide;
using linalg::SchurForm;

// Schur form of [[A, X], [0, F]] from the Schur forms of A and F.
SchurForm block_upper_schur(const SchurForm& a, const SchurForm& f, const Matrix& X) {
  const int n = a.dim(), nu = f.dim();
  SchurForm s;
  s.Q = Matrix::Zero(n + nu, n + nu);
  s.T = Matrix::Zero(n + nu, n + nu);
  s.Q.topLeftCorner(n, n) = a.Q;
  s.Q.bottomRightCorner(nu, nu) = f.Q;
  s.T.topLeftCorner(n, n) = a.T;
  s.T.bottomRightCorner(nu, nu) = f.T;
  s.T.topRightCorner(n, nu) = a.Q.transpose() * X * f.Q;
  return s;
}

void require_shapes(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                    const Matrix& L) {
  const auto nu = S.rows();
  if (S.cols() != nu || G.rows() != nu || G.cols() != sys.m() || L.rows() != sys.m() ||
      L.cols() != nu) {
    std::ostringstream os;
    os << "shape mismatch: S " << S.rows() << "x" << S.cols() << ", G " << G.rows()
       << "x" << G.cols() << ", L " << L.rows() << "x" << L.cols() << " for m = "
       << sys.m();
    throw Error(ErrorCode::kDimension, os.str());
  }
}

double frob2(const GradientPair& g) { return g.S.squaredNorm() + g.G.squaredNorm(); }

Vector flatten(const Matrix& S, const Matrix& G) {
  Vector v(S.size() + G.size());
  v << S.reshaped(), G.reshaped();
  return v;
}

}  // namespace

Objective::Objective(const NetworkSystem& sys, Matrix L, PiMode mode, Matrix Pi)
    : sys_(sys), L_(std::move(L)), mode_(mode), Pi_(std::move(Pi)) {
  if (L_.rows() != sys_.m()) throw Error(ErrorCode::kDimension, "L must have m rows");
  if (mode_ == PiMode::kFixed &&
      (Pi_.rows() != sys_.n() || Pi_.cols() != L_.cols())) {
    throw Error(ErrorCode::kDimension, "fixed Pi must be n x nu");
  }
  schurA_ = linalg::schur_decompose(sys_.A);
  schurAt_ = linalg::transpose_schur(schurA_);
}

Matrix Objective::pi_for(const Matrix& S) const {
  if (mode_ == PiMode::kFixed) return Pi_;
  const SchurForm ss = linalg::schur_decompose(S);
  const linalg::ClosestPair pair = linalg::closest_eigenvalue_pair(
      linalg::spectrum_from_schur(schurA_), linalg::spectrum_from_schur(ss));
  if (pair.distance <= linalg::kDefaultSpectralGap) {
    throw Error(ErrorCode::kNoUniqueSolution, "spectra of A and S overlap; Pi(S) undefined");
  }
  return linalg::solve_sylvester(schurA_, ss, sys_.B * L_);
}

ObjectiveEval Objective::evaluate(const Matrix& S, const Matrix& G,
                                  bool with_gradient) const {
  require_shapes(sys_, S, G, L_);
  const int n = sys_.n(), nu = static_cast<int>(S.rows());
  const Matrix F = S - G * L_;
  const SchurForm sf = linalg::schur_decompose(F);
  const double mr = linalg::spectrum_from_schur(sf).max_real_part;
  if (!(mr < -linalg::kDefaultStabilityMargin)) {
    std::ostringstream os;
    os << "S - GL is not Hurwitz: max real part " << mr;
    throw Error(ErrorCode::kUnstable, os.str());
  }

  ObjectiveEval ev;
  ev.Pi = pi_for(S);
  const Matrix& Pi = ev.Pi;
  const Matrix H = sys_.C * Pi;

  // Coordinates (x - Pi xr, xr): the error data is small when the error is.
  const SchurForm st = block_upper_schur(schurA_, sf, sys_.A * Pi - Pi * F);
  Matrix Bt(n + nu, sys_.m());
  Bt.topRows(n) = sys_.B - Pi * G;
  Bt.bottomRows(nu) = G;
  Matrix Ct(sys_.p(), n + nu);
  Ct.leftCols(n) = sys_.C;
  Ct.rightCols(nu) = sys_.C * Pi - H;
  const Matrix Mt = linalg::solve_lyapunov(st, Ct.transpose() * Ct, LyapunovSide::kObservability);
  ev.f = std::max(0.0, (Bt.transpose() * Mt * Bt).trace());

  // Back to the original coordinates: M = T^T Mt T, T = [[I, -Pi], [0, I]].
  ev.M = Mt;
  ev.M.topRightCorner(n, nu) = Mt.topRightCorner(n, nu) - Mt.topLeftCorner(n, n) * Pi;
  ev.M.bottomLeftCorner(nu, n) = ev.M.topRightCorner(n, nu).transpose();
  ev.M.bottomRightCorner(nu, nu) =
      Mt.bottomRightCorner(nu, nu) - Pi.transpose() * Mt.topRightCorner(n, nu) -
      Mt.bottomLeftCorner(nu, n) * Pi + Pi.transpose() * Mt.topLeftCorner(n, n) * Pi;
  if (!with_gradient) return ev;

  const Matrix Wt = linalg::solve_lyapunov(st, Bt * Bt.transpose(),
                                           LyapunovSide::kControllability);
  // W = T^{-1} Wt T^{-T}, T^{-1} = [[I, Pi], [0, I]].
  ev.W = Wt;
  ev.W.topRightCorner(n, nu) = Wt.topRightCorner(n, nu) + Pi * Wt.bottomRightCorner(nu, nu);
  ev.W.bottomLeftCorner(nu, n) = ev.W.topRightCorner(n, nu).transpose();
  ev.W.topLeftCorner(n, n) = Wt.topLeftCorner(n, n) + Pi * Wt.bottomLeftCorner(nu, n) +
                             Wt.topRightCorner(n, nu) * Pi.transpose() +
                             Pi * Wt.bottomRightCorner(nu, nu) * Pi.transpose();

  const Matrix M12 = ev.M.topRightCorner(n, nu);
  const Matrix M22 = ev.M.bottomRightCorner(nu, nu);
  const Matrix W12 = ev.W.topRightCorner(n, nu);
  const Matrix W22 = ev.W.bottomRightCorner(nu, nu);
  const Matrix core = M12.transpose() * W12 + M22 * W22;
  ev.gradS = 2.0 * core;
  ev.gradG = 2.0 * (M12.transpose() * sys_.B + M22 * G - core * L_.transpose());

  if (mode_ == PiMode::kTracking) {
    // Adjoint of Pi(S): A^T Lam - Lam S^T = C^T (Ce W)[:, n:].
    Matrix Ce(sys_.p(), n + nu);
    Ce.leftCols(n) = sys_.C;
    Ce.rightCols(nu) = -H;
    const Matrix Gam = sys_.C.transpose() * (Ce * ev.W.rightCols(nu));
    const SchurForm sst = linalg::transpose_schur(linalg::schur_decompose(S));
    const Matrix Lam = linalg::solve_sylvester(schurAt_, sst, -Gam);
    ev.gradS -= 2.0 * Pi.transpose() * Lam;
  }
  return ev;
}

double Objective::value(const Matrix& S, const Matrix& G) const {
  return evaluate(S, G, false).f;
}

std::optional<double> Objective::try_value(const Matrix& S, const Matrix& G,
                                           double stability_margin) const {
  if (!S.allFinite() || !G.allFinite()) return std::nullopt;
  if (!linalg::is_hurwitz(S - G * L_, stability_margin)) return std::nullopt;
  try {
    const double f = value(S, G);
    if (!std::isfinite(f)) return std::nullopt;
    return f;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnstable || e.code() == ErrorCode::kNoUniqueSolution)
      return std::nullopt;
    throw;
  }
}

ObjectiveEval objective(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                        const Matrix& L, const Matrix& Pi) {
  return Objective(sys, L, PiMode::kFixed, Pi).evaluate(S, G, false);
}

ObjectiveEval gradient(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                       const Matrix& L, const Matrix& Pi) {
  return Objective(sys, L, PiMode::kFixed, Pi).evaluate(S, G, true);
}

GradientPair finite_diff_gradient(const Objective& obj, const Matrix& S,
                                  const Matrix& G, double h) {
  GradientPair g{Matrix::Zero(S.rows(), S.cols()), Matrix::Zero(G.rows(), G.cols())};
  Matrix Sw = S, Gw = G;
  auto diff = [&](Matrix& X, int i, int j) -> double {
    const double x0 = X(i, j);
    double step = h;
    for (int attempt = 0; attempt < 4; ++attempt, step *= 0.1) {
      X(i, j) = x0 + step;
      const auto fp = obj.try_value(Sw, Gw, 0.0);
      X(i, j) = x0 - step;
      const auto fm = obj.try_value(Sw, Gw, 0.0);
      X(i, j) = x0;
      if (fp && fm) return (*fp - *fm) / (2.0 * step);
    }
    throw Error(ErrorCode::kUnstable,
                "finite differences leave the stable set even after shrinking the step");
  };
  for (int j = 0; j < S.cols(); ++j)
    for (int i = 0; i < S.rows(); ++i) g.S(i, j) = diff(Sw, i, j);
  for (int j = 0; j < G.cols(); ++j)
    for (int i = 0; i < G.rows(); ++i) g.G(i, j) = diff(Gw, i, j);
  return g;
}

GradientPair project_gradient(const Matrix& gradS, const Matrix& gradG,
                              const Topology& topology, const ReducedOrders& orders,
                              const Matrix& L, bool apply_input_mask) {
  GradientPair p{gradS, gradG};
  if (apply_input_mask) zero_forbidden_input_blocks(p.G, topology, orders);
  const auto forbidden = forbidden_state_blocks(topology);
  if (forbidden.empty()) return p;
  const Matrix GL = p.G * L;
  const auto off = block_offsets(orders.orders);
  for (const BlockIndex& b : forbidden) {
    const int r = off[b.first], c = off[b.second];
    const int nr = orders.orders[b.first], nc = orders.orders[b.second];
    p.S.block(r, c, nr, nc) = GL.block(r, c, nr, nc);
  }
  return p;
}

void rezero(Matrix& S, Matrix& G, const Matrix& L, const Topology& topology,
            const ReducedOrders& orders, bool apply_input_mask) {
  if (apply_input_mask) zero_forbidden_input_blocks(G, topology, orders);
  const auto forbidden = forbidden_state_blocks(topology);
  if (forbidden.empty()) return;
  const Matrix GL = G * L;
  const auto off = block_offsets(orders.orders);
  for (const BlockIndex& b : forbidden) {
    const int r = off[b.first], c = off[b.second];
    const int nr = orders.orders[b.first], nc = orders.orders[b.second];
    S.block(r, c, nr, nc) = GL.block(r, c, nr, nc);
  }
}

void validate(const OptimizerConfig& c) {
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "optimizer config: " + what);
  };
  if (!(c.epsilon > 0.0)) bad("epsilon must be positive");
  if (c.max_iter < 0) bad("max_iter must be non-negative");
  if (!(c.armijo_c > 0.0 && c.armijo_c < 1.0)) bad("armijo_c must lie in (0, 1)");
  if (!(c.backtrack_factor > 0.0 && c.backtrack_factor < 1.0))
    bad("backtrack_factor must lie in (0, 1)");
  if (!(c.initial_step > 0.0)) bad("initial_step must be positive");
  if (!(c.stability_margin >= 0.0)) bad("stability_margin must be non-negative");
  if (c.max_backtracks < 1) bad("max_backtracks must be at least 1");
  if (!(c.max_step >= c.initial_step)) bad("max_step must be >= initial_step");
}

LineSearchResult line_search(const Objective& obj, const Matrix& S, const Matrix& G,
                             double f, const GradientPair& direction,
                             double trial_step, const OptimizerConfig& config,
                             const Topology& topology, const ReducedOrders& orders) {
  LineSearchResult r;
  const double d2 = frob2(direction);
  double t = trial_step;
  for (int k = 0; k <= config.max_backtracks; ++k, t *= config.backtrack_factor) {
    Matrix S2 = S - t * direction.S;
    Matrix G2 = G - t * direction.G;
    rezero(S2, G2, obj.L(), topology, orders, config.input_mask);
    const auto f2 = obj.try_value(S2, G2, config.stability_margin);
    if (!f2) {
      ++r.unstable_rejections;
      r.backtracks = k + 1;
      continue;
    }
    if (*f2 <= f - config.armijo_c * t * d2) {
      r.accepted = true;
      r.step = t;
      r.f = *f2;
      r.backtracks = k;
      r.S = std::move(S2);
      r.G = std::move(G2);
      return r;
    }
    r.backtracks = k + 1;
  }
  return r;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kMaxIterations: return "max-iterations";
    case Termination::kStalled: return "stalled";
  }
  return "unknown";
}

std::pair<Matrix, Matrix> fallback_start(int nu, int m) {
  Matrix S = Matrix::Zero(nu, nu);
  for (int i = 0; i < nu; ++i) S(i, i) = -(i + 1.0);
  return {S, Matrix::Zero(nu, m)};
}

OptimizerReport optimize(const NetworkSystem& sys, const Matrix& S0, const Matrix& G0,
                         const Matrix& L, const ReducedOrders& orders,
                         const Matrix& Pi, const OptimizerConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(config);
  orders.validate(sys.topology);
  require_shapes(sys, S0, G0, L);
  if (S0.rows() != orders.total()) {
    throw Error(ErrorCode::kDimension, "S0 does not match the reduced orders");
  }
  const Topology& topo = sys.topology;

  Matrix S = S0, G = G0;
  {
    // The start must already be structured; only rounding drift is removed.
    Matrix F = S - G * L;
    const double scale = std::max(1.0, S.norm() + G.norm() * L.norm());
    const auto off = block_offsets(orders.orders);
    for (const BlockIndex& b : forbidden_state_blocks(topo)) {
      const double v = F.block(off[b.first], off[b.second], orders.orders[b.first],
                               orders.orders[b.second])
                           .cwiseAbs()
                           .maxCoeff();
      if (v > kStructureDriftTol * scale) {
        throw Error(ErrorCode::kStructure,
                    "initial point violates the structure at block (" +
                        std::to_string(b.first) + "," + std::to_string(b.second) + ")");
      }
    }
    rezero(S, G, L, topo, orders, config.input_mask);
  }
  if (!linalg::is_hurwitz(S - G * L, config.stability_margin)) {
    throw Error(ErrorCode::kUnstable, "initial point: S - GL is not Hurwitz");
  }

  const Objective obj(sys, L, config.pi_mode, config.pi_mode == PiMode::kFixed ? Pi : Matrix{});
  OptimizerReport rep;
  ObjectiveEval ev = obj.evaluate(S, G, true);
  rep.f_history.push_back(ev.f);
  if (config.on_iterate) config.on_iterate(0, S, G);
  rep.descent_constant = std::numeric_limits<double>::infinity();

  GradientPair prev_x, prev_d;
  bool have_prev = false;
  double last_step = config.initial_step;
  rep.termination = Termination::kMaxIterations;
  for (int k = 0;; ++k) {
    const GradientPair d = project_gradient(ev.gradS, ev.gradG, topo, orders, L,
                                            config.input_mask);
    const double dn = std::sqrt(frob2(d));
    rep.gradmap_history.push_back(dn);
    if (dn <= config.epsilon) {
      rep.termination = Termination::kConverged;
      break;
    }
    if (k >= config.max_iter) break;

    double trial = config.initial_step;
    if (config.bb_step && have_prev) {
      const Vector s = flatten(S, G) - flatten(prev_x.S, prev_x.G);
      const Vector y = flatten(d.S, d.G) - flatten(prev_d.S, prev_d.G);
      const double sy = s.dot(y);
      const bool use_long = config.bb_rule == BbRule::kLong ||
                            (config.bb_rule == BbRule::kAlternating && k % 2 == 1);
      const double bb = use_long ? s.squaredNorm() / sy : sy / y.squaredNorm();
      trial = sy > 0.0 ? std::min(bb, config.max_step)
                       : std::min(2.0 * last_step, config.max_step);
    }
    const LineSearchResult ls = line_search(obj, S, G, ev.f, d, trial, config, topo, orders);
    if (!ls.accepted) {
      rep.termination = Termination::kStalled;
      std::ostringstream os;
      os << "line search found no acceptable step after " << ls.backtracks
         << " reductions (" << ls.unstable_rejections << " unstable candidates)";
      rep.message = os.str();
      break;
    }
    prev_x = {S, G};
    prev_d = d;
    have_prev = true;
    rep.descent_constant =
        std::min(rep.descent_constant, (ev.f - ls.f) / (ls.step * dn * dn));
    S = ls.S;
    G = ls.G;
    last_step = ls.step;
    ev = obj.evaluate(S, G, true);
    rep.f_history.push_back(ev.f);
    rep.step_sizes.push_back(ls.step);
    rep.backtracks.push_back(ls.backtracks);
    rep.iterations = k + 1;
    if (config.on_iterate) config.on_iterate(k + 1, S, G);
  }
  if (rep.step_sizes.empty()) rep.descent_constant = 0.0;
  if (rep.message.empty()) {
    std::ostringstream os;
    os << to_string(rep.termination) << " after " << rep.iterations
       << " iterations, |gradient mapping| = " << rep.gradmap_history.back();
    rep.message = os.str();
  }
  rep.S = S;
  rep.G = G;
  rep.final_eval = ev;
  try {
    const ReducedNetwork red = build_reduced(sys, S, G, L, orders, ev.Pi);
    ConstraintReport c = check_problem_constraints(sys, red);
    c.h2_error = std::sqrt(ev.f);
    rep.constraints = c;
  } catch (const Error&) {
    rep.constraints.reset();
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace netred::opt
