#include "netred/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "netred/error.hpp"

namespace netred {

std::string to_string(Method m) {
  switch (m) {
    case Method::kSdp: return "sdp";
    case Method::kGrad: return "grad";
    case Method::kSdpGrad: return "sdp+grad";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "sdp") return Method::kSdp;
  if (s == "grad") return Method::kGrad;
  if (s == "sdp+grad") return Method::kSdpGrad;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown method '" + s + "' (expected sdp, grad or sdp+grad)");
}

namespace {

bool usable_start(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                  const Matrix& L, double margin) {
  return S.allFinite() && G.allFinite() && linalg::is_hurwitz(S - G * L, margin) &&
         linalg::spectra_disjoint(sys.A, S);
}

SdpStage run_sdp(const NetworkSystem& sys, const Matrix& L, const ReducedOrders& orders,
                 const PipelineConfig& cfg) {
  const Matrix grid = cfg.s_grid.size() ? cfg.s_grid : default_s_grid(orders.total());
  const Matrix CPi = moments(sys, grid, L);
  const RelaxationSdp rel = build_sdp(sys, L, orders, CPi, cfg.formulation, cfg.scale_bound);
  const sdp::SdpSolution sol = sdp::solve_sdp(rel.problem, cfg.sdp, &rel.start);

  SdpStage st;
  st.status = sol.status;
  st.objective = sol.objective;
  st.duality_gap = sol.duality_gap;
  st.primal_residual = sol.primal_residual;
  st.iterations = sol.newton_steps;
  st.num_vars = rel.problem.num_vars;
  st.message = sol.message;
  if (sol.status != sdp::SdpStatus::kOptimal) return st;
  st.audit_passed = sdp::audit(rel.problem, sol.x, 10.0 * cfg.sdp.tol).passed;
  const RelaxationVariables vars = extract_variables(sys, rel, sol.x);
  try {
    Recovery rec = recover_reduced(vars, sys, L, orders);
    st.ridge_applied = rec.ridge_applied;
    st.recovered_h2 = h2_norm(error_realization(sys, rec.model));
    st.recovered = true;
    st.model = std::move(rec.model);
  } catch (const Error& e) {
    st.message = e.what();
  }
  return st;
}

}  // namespace

std::pair<Matrix, Matrix> safe_fallback_start(const NetworkSystem& sys, int nu) {
  auto [S, G] = opt::fallback_start(nu, sys.m());
  for (int k = 0; k < 50 && !linalg::spectra_disjoint(sys.A, S, 1e-3); ++k) {
    S *= 1.0 + 0.37 / (k + 1);
  }
  return {S, G};
}

std::pair<Matrix, Matrix> perturb_start(const NetworkSystem& sys, const Matrix& S,
                                        const Matrix& G, const Matrix& L,
                                        const ReducedOrders& orders, double relative,
                                        std::uint64_t seed, bool input_mask) {
  if (relative <= 0.0) return {S, G};
  const Matrix F = S - G * L;
  const double big = F.cwiseAbs().maxCoeff();
  const double scale = std::max(F.diagonal().cwiseAbs().minCoeff(), 1e-3 * big);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix dF = Matrix::Zero(F.rows(), F.cols());
  for (int j = 0; j < F.cols(); ++j)
    for (int i = 0; i < F.rows(); ++i)
      if (i != j) dF(i, j) = u(rng);
  Matrix dG(G.rows(), G.cols());
  for (int j = 0; j < G.cols(); ++j)
    for (int i = 0; i < G.rows(); ++i) dG(i, j) = u(rng);

  for (double eps = relative * scale; eps > 1e-6 * relative * scale; eps *= 0.5) {
    Matrix G2 = G + eps * dG;
    Matrix S2 = F + eps * dF + G2 * L;
    opt::rezero(S2, G2, L, sys.topology, orders, input_mask);
    if (usable_start(sys, S2, G2, L, linalg::kDefaultStabilityMargin)) return {S2, G2};
  }
  return {S, G};
}

Matrix canonical_last_L(int m, int nu) {
  if (m < 1 || nu < 1) throw Error(ErrorCode::kInvalidArgument, "L needs m >= 1 and nu >= 1");
  Matrix L = Matrix::Zero(m, nu);
  L.col(nu - 1).setOnes();
  return L;
}

PipelineResult reduce(const NetworkSystem& sys, const Matrix& L,
                      const ReducedOrders& orders, const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_system(sys);
  orders.validate(sys.topology);
  const int nu = orders.total();
  if (L.rows() != sys.m() || L.cols() != nu) {
    throw Error(ErrorCode::kDimension, "L must be m x nu");
  }
  if (cfg.starts < 1) throw Error(ErrorCode::kInvalidArgument, "starts must be >= 1");
  opt::OptimizerConfig ocfg = cfg.optimizer;
  if (sys.topology.input_neighbors) ocfg.input_mask = true;
  opt::validate(ocfg);

  PipelineResult res;
  Matrix S0, G0;
  bool have_start = false;
  if (cfg.method != Method::kGrad) {
    SdpStage st = run_sdp(sys, L, orders, cfg);
    if (st.recovered) {
      S0 = st.model->S;
      G0 = st.model->G;
      have_start = true;
      for (const std::string& w : st.model->warnings) res.warnings.push_back("relaxation model: " + w);
    }
    const bool ok = st.recovered;
    const std::string why = st.status != sdp::SdpStatus::kOptimal
                                ? "relaxation not solved (" +
                                      std::string(sdp::to_string(st.status)) + "): " + st.message
                                : "recovery failed: " + st.message;
    res.sdp = std::move(st);
    if (!ok) {
      if (cfg.method == Method::kSdp) {
        throw Error(res.sdp->status == sdp::SdpStatus::kInfeasible ? ErrorCode::kInfeasible
                                                                   : ErrorCode::kNotConverged,
                    why);
      }
      res.warnings.push_back(why + "; gradient stage starts from the diagonal fallback");
    }
  }

  if (cfg.method == Method::kSdp) {
    res.model = *res.sdp->model;
  } else {
    GradStage gs;
    gs.from_sdp = have_start;
    if (!have_start) std::tie(S0, G0) = safe_fallback_start(sys, nu);
    struct Start {
      Matrix S, G, Pi;
      double f = 0.0;
      std::optional<opt::OptimizerReport> full;
    };
    std::vector<Start> pool(cfg.starts);
    std::vector<int> order;
    std::optional<opt::OptimizerReport> best;
    auto consider = [&](opt::OptimizerReport&& rep, int k) {
      if (!best || rep.f_history.back() < best->f_history.back()) {
        best = std::move(rep);
        gs.best_start = k;
      }
    };
    opt::OptimizerConfig screen = ocfg;
    if (cfg.starts > 1) screen.max_iter = std::min(cfg.screen_iter, ocfg.max_iter);
    for (int k = 0; k < cfg.starts; ++k) {
      Start& st = pool[k];
      std::tie(st.S, st.G) = perturb_start(sys, S0, G0, L, orders, cfg.perturbation,
                                           cfg.seed * 1000003ULL + k, ocfg.input_mask);
      if (ocfg.pi_mode == opt::PiMode::kFixed) st.Pi = compute_pi(sys, st.S, L);
      opt::OptimizerReport rep;
      try {
        rep = opt::optimize(sys, st.S, st.G, L, orders, st.Pi, screen);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnstable && e.code() != ErrorCode::kNoUniqueSolution) throw;
        res.warnings.push_back("start " + std::to_string(k) + " rejected: " + e.what());
        gs.start_h2.push_back(NAN);
        continue;
      }
      ++gs.starts_run;
      gs.start_h2.push_back(std::sqrt(rep.f_history.back()));
      st.f = rep.f_history.back();
      order.push_back(k);
      // A converged or single start needs no rerun.
      if (rep.termination != opt::Termination::kMaxIterations || cfg.starts == 1)
        st.full = std::move(rep);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pool[a].f < pool[b].f; });
    int reruns = 0;
    for (int k : order) {
      Start& st = pool[k];
      if (!st.full) {
        if (reruns >= cfg.continue_starts) continue;
        ++reruns;
        gs.continued.push_back(k);
        st.full = opt::optimize(sys, st.S, st.G, L, orders, st.Pi, ocfg);
      }
      const bool converged = st.full->termination == opt::Termination::kConverged;
      consider(std::move(*st.full), k);
      if (converged) break;
    }
    if (!best) throw Error(ErrorCode::kStalled, "no gradient start could be evaluated");
    gs.report = std::move(*best);
    // A fixed Pi belongs to the start, not to the final S.
    res.model = ocfg.pi_mode == opt::PiMode::kTracking
                    ? build_reduced(sys, gs.report.S, gs.report.G, L, orders,
                                    gs.report.final_eval.Pi)
                    : build_reduced(sys, gs.report.S, gs.report.G, L, orders);
    if (gs.report.termination != opt::Termination::kConverged) {
      res.warnings.push_back("gradient stage: " + gs.report.message);
    }
    res.grad = std::move(gs);
  }

  res.h2_error = h2_norm(error_realization(sys, res.model));
  res.constraints = check_problem_constraints(sys, res.model);
  res.constraints.h2_error = res.h2_error;
  res.moments = verify_moment_matching(sys, res.model);
  for (const std::string& w : res.model.warnings) res.warnings.push_back(w);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace netred
