#include "netred/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "netred/error.hpp"

namespace netred {

int VarBlock::index(int i, int j) const {
  if (symmetric) {
    if (i > j) std::swap(i, j);
    return offset + j * (j + 1) / 2 + i;
  }
  return offset + i * cols + j;
}

Matrix VarBlock::value(const Vector& x) const {
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = x(index(i, j));
  return M;
}

Matrix default_s_grid(int nu) {
  Matrix S = Matrix::Zero(nu, nu);
  for (int i = 0; i < nu; ++i) S(i, i) = i + 1.0;
  return S;
}

int full_variable_count(const NetworkSystem& sys, const ReducedOrders& orders) {
  const int n = sys.n(), m = sys.m(), nu = orders.total();
  int count = n * (n + 1) / 2 + m * (m + 1) / 2 + nu * (nu + 1) / 2 + nu * m + nu * nu;
  for (int k : orders.orders) count += k * (k + 1) / 2;
  return count;
}

namespace {

VarBlock new_block(sdp::SdpProblem& p, int rows, int cols, bool symmetric) {
  VarBlock b;
  b.rows = rows;
  b.cols = cols;
  b.symmetric = symmetric;
  b.offset = p.add_vars(b.count());
  return b;
}

template <typename F>
void for_each_sym(const VarBlock& b, F&& f) {
  for (int j = 0; j < b.rows; ++j)
    for (int i = 0; i <= j; ++i) f(i, j, b.index(i, j));
}

// Adds -(Theta^T + Theta - L^T Z^T - Z L) at diagonal offset off.
void add_slack_terms(sdp::Lmi& lmi, int off, const VarBlock& Theta,
                     const VarBlock& Z, const Matrix& L) {
  const int nu = Theta.rows;
  for (int a = 0; a < nu; ++a)
    for (int b = 0; b < nu; ++b)
      lmi.add(Theta.index(a, b), off + a, off + b, a == b ? -2.0 : -1.0);
  for (int a = 0; a < nu; ++a)
    for (int c = 0; c < Z.cols; ++c)
      for (int j = 0; j < nu; ++j) {
        const double v = L(c, j);
        if (v == 0.0) continue;
        lmi.add(Z.index(a, c), off + a, off + j, j == a ? 2.0 * v : v);
      }
}

void add_structure_equalities(RelaxationSdp& rel, const Matrix& L) {
  const auto off = block_offsets(rel.orders.orders);
  for (const BlockIndex& blk : forbidden_state_blocks(rel.topology)) {
    for (int a = off[blk.first]; a < off[blk.first + 1]; ++a)
      for (int b = off[blk.second]; b < off[blk.second + 1]; ++b) {
        sdp::LinearEquality eq;
        eq.coeffs.emplace_back(rel.Theta22.index(a, b), 1.0);
        for (int c = 0; c < L.rows(); ++c)
          if (L(c, b) != 0.0) eq.coeffs.emplace_back(rel.Z22.index(a, c), -L(c, b));
        rel.problem.equalities.push_back(std::move(eq));
        ++rel.structure_equalities;
      }
  }
  if (!rel.topology.input_neighbors) return;
  const auto ioff = block_offsets(input_partition(rel.topology));
  for (const BlockIndex& blk : forbidden_input_blocks(rel.topology)) {
    for (int a = off[blk.first]; a < off[blk.first + 1]; ++a)
      for (int c = ioff[blk.second]; c < ioff[blk.second + 1]; ++c) {
        rel.problem.equalities.push_back({{{rel.Z22.index(a, c), 1.0}}, 0.0});
        ++rel.input_equalities;
      }
  }
}

void add_scale_bound(RelaxationSdp& rel) {
  sdp::Lmi lmi("scale_bound", 2);
  lmi.constant() = rel.scale_bound * Matrix::Identity(2, 2);
  for (const VarBlock& b : rel.M22)
    for (int i = 0; i < b.rows; ++i) lmi.add(b.index(i, i), 0, 0, -1.0);
  for (int i = 0; i < rel.Theta22.rows; ++i) lmi.add(rel.Theta22.index(i, i), 1, 1, 1.0);
  rel.problem.lmis.push_back(std::move(lmi));
}

bool input_allowed(const Topology& t, int block, int col) {
  if (!t.input_neighbors) return true;
  const auto ioff = block_offsets(input_partition(t));
  for (int J = 0; J < t.N; ++J)
    if (col >= ioff[J] && col < ioff[J + 1]) return t.input_coupled(block, J);
  return false;
}

void build_full(RelaxationSdp& rel, const NetworkSystem& sys) {
  sdp::SdpProblem& p = rel.problem;
  const int n = sys.n(), m = sys.m(), nu = rel.orders.total();
  const Matrix& CPi = rel.CPi;
  const Matrix& L = rel.L;
  const auto off = block_offsets(rel.orders.orders);

  rel.M11 = new_block(p, n, n, true);
  for (int k : rel.orders.orders) rel.M22.push_back(new_block(p, k, k, true));
  rel.X22 = new_block(p, m, m, true);
  rel.Y22 = new_block(p, nu, nu, true);
  rel.Z22 = new_block(p, nu, m, false);
  rel.Theta22 = new_block(p, nu, nu, false);

  const Matrix BBt = sys.B * sys.B.transpose();
  for_each_sym(rel.M11, [&](int i, int j, int v) { p.c(v) = (i == j ? 1.0 : 2.0) * BBt(i, j); });
  for (int i = 0; i < m; ++i) p.c(rel.X22.index(i, i)) = 1.0;

  // Y22 - (Theta^T - L^T Z^T + Theta - Z L + (C Pi)^T (C Pi)) >= 0
  sdp::Lmi slack("slack", nu);
  slack.constant() = -CPi.transpose() * CPi;
  add_slack_terms(slack, 0, rel.Theta22, rel.Z22, L);
  for_each_sym(rel.Y22, [&](int i, int j, int v) { slack.add(v, i, j, 1.0); });

  // [[X22, Z22^T], [Z22, M22]] >= 0
  sdp::Lmi schur("schur", m + nu);
  for_each_sym(rel.X22, [&](int i, int j, int v) { schur.add(v, i, j, 1.0); });
  for (int a = 0; a < nu; ++a)
    for (int c = 0; c < m; ++c) schur.add(rel.Z22.index(a, c), m + a, c, 1.0);
  for (std::size_t k = 0; k < rel.orders.orders.size(); ++k) {
    for_each_sym(rel.M22[k], [&](int i, int j, int v) {
      schur.add(v, m + off[k] + i, m + off[k] + j, 1.0);
    });
  }

  // -[[A^T M11 + M11 A + C^T C, -C^T C Pi], [-(C Pi)^T C, Y22]] >= 0
  sdp::Lmi lyap("lyapunov", n + nu);
  Matrix K0 = Matrix::Zero(n + nu, n + nu);
  K0.topLeftCorner(n, n) = sys.C.transpose() * sys.C;
  K0.topRightCorner(n, nu) = -sys.C.transpose() * CPi;
  K0.bottomLeftCorner(nu, n) = K0.topRightCorner(n, nu).transpose();
  lyap.constant() = -K0;
  for_each_sym(rel.M11, [&](int i, int j, int v) {
    Matrix E = Matrix::Zero(n, n);
    E(i, j) = 1.0;
    E(j, i) = 1.0;
    lyap.add_dense(v, 0, -(sys.A.transpose() * E + E * sys.A));
  });
  for_each_sym(rel.Y22, [&](int i, int j, int v) { lyap.add(v, n + i, n + j, -1.0); });

  // M11 >= 0 follows from the Lyapunov block and M22 >= 0 from the Schur
  // block; repeating them only makes the dual degenerate.
  p.lmis.push_back(std::move(slack));
  p.lmis.push_back(std::move(schur));
  p.lmis.push_back(std::move(lyap));

  add_structure_equalities(rel, L);
  add_scale_bound(rel);

  // Strictly feasible start.
  const double cpi2 = CPi.squaredNorm();
  const double c2 = sys.C.squaredNorm();
  const double beta = 1.0 + cpi2;
  const double alpha = c2 * (1.0 + cpi2 / beta) + 1.0;
  const double delta = 0.5 * (beta + cpi2) + 1.0;
  const Matrix Lo = linalg::solve_lyapunov(sys.A, Matrix::Identity(n, n),
                                           linalg::LyapunovSide::kObservability);
  Vector x = Vector::Zero(p.num_vars);
  for_each_sym(rel.M11, [&](int i, int j, int v) { x(v) = alpha * Lo(i, j); });
  for (const VarBlock& b : rel.M22)
    for (int i = 0; i < b.rows; ++i) x(b.index(i, i)) = 1.0;
  for (int i = 0; i < m; ++i) x(rel.X22.index(i, i)) = 1.0;
  for (int i = 0; i < nu; ++i) {
    x(rel.Y22.index(i, i)) = -beta;
    x(rel.Theta22.index(i, i)) = -delta;
  }
  rel.start = x;
}

void build_condensed(RelaxationSdp& rel, const NetworkSystem& sys) {
  sdp::SdpProblem& p = rel.problem;
  const int m = sys.m(), nu = rel.orders.total(), pp = sys.p();
  const Matrix& CPi = rel.CPi;
  const Matrix& L = rel.L;
  const auto off = block_offsets(rel.orders.orders);

  const Matrix Wc = linalg::solve_lyapunov(sys.A, sys.B * sys.B.transpose(),
                                           linalg::LyapunovSide::kControllability);
  const Matrix CWC = sys.C * Wc * sys.C.transpose();
  rel.norm_K_squared = CWC.trace();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (CWC + CWC.transpose()));
  const Matrix Lc = es.eigenvectors() *
                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  const Matrix R = CPi.transpose() * Lc;  // nu x p

  for (int k : rel.orders.orders) rel.M22.push_back(new_block(p, k, k, true));
  rel.Z22 = new_block(p, nu, m, false);
  rel.Theta22 = new_block(p, nu, nu, false);
  rel.U = new_block(p, pp, pp, true);
  p.c0 = rel.norm_K_squared;
  for (int i = 0; i < pp; ++i) p.c(rel.U.index(i, i)) = 1.0;

  // [[U, R^T], [R, -(Theta^T - L^T Z^T + Theta - Z L + (C Pi)^T (C Pi))]] >= 0
  sdp::Lmi outer("output", pp + nu);
  outer.constant().bottomLeftCorner(nu, pp) = R;
  outer.constant().topRightCorner(pp, nu) = R.transpose();
  outer.constant().bottomRightCorner(nu, nu) = -CPi.transpose() * CPi;
  for_each_sym(rel.U, [&](int i, int j, int v) { outer.add(v, i, j, 1.0); });
  add_slack_terms(outer, pp, rel.Theta22, rel.Z22, L);
  p.lmis.push_back(std::move(outer));

  // [[t, z^T], [z, M22^i]] >= 0 for every subsystem and admissible input.
  for (int k = 0; k < rel.topology.N; ++k) {
    const int nk = rel.orders.orders[k];
    bool any = false;
    for (int c = 0; c < m; ++c) {
      if (!input_allowed(rel.topology, k, c)) continue;
      any = true;
      const int t = p.add_vars(1);
      p.c(t) = 1.0;
      rel.t_vars.push_back(t);
      sdp::Lmi lmi("input_" + std::to_string(k) + "_" + std::to_string(c), nk + 1);
      lmi.add(t, 0, 0, 1.0);
      for (int a = 0; a < nk; ++a) lmi.add(rel.Z22.index(off[k] + a, c), 0, 1 + a, 1.0);
      for_each_sym(rel.M22[k], [&](int i, int j, int v) { lmi.add(v, 1 + i, 1 + j, 1.0); });
      p.lmis.push_back(std::move(lmi));
    }
    if (!any) {
      sdp::Lmi blk("M22_" + std::to_string(k), nk);
      for_each_sym(rel.M22[k], [&](int i, int j, int v) { blk.add(v, i, j, 1.0); });
      p.lmis.push_back(std::move(blk));
    }
  }

  add_structure_equalities(rel, L);
  add_scale_bound(rel);

  const double delta = 0.5 * CPi.squaredNorm() + 1.0;
  const double u = 0.5 * R.squaredNorm() + 1.0;
  Vector x = Vector::Zero(p.num_vars);
  for (const VarBlock& b : rel.M22)
    for (int i = 0; i < b.rows; ++i) x(b.index(i, i)) = 1.0;
  for (int i = 0; i < nu; ++i) x(rel.Theta22.index(i, i)) = -delta;
  for (int i = 0; i < pp; ++i) x(rel.U.index(i, i)) = u;
  for (int t : rel.t_vars) x(t) = 1.0;
  rel.start = x;
}

Matrix assemble_m22(const RelaxationSdp& rel, const Vector& x) {
  const int nu = rel.orders.total();
  const auto off = block_offsets(rel.orders.orders);
  Matrix M22 = Matrix::Zero(nu, nu);
  for (std::size_t k = 0; k < rel.M22.size(); ++k) {
    const int nk = rel.orders.orders[k];
    M22.block(off[k], off[k], nk, nk) = rel.M22[k].value(x);
  }
  return M22;
}

Matrix slack_matrix(const Matrix& Theta, const Matrix& Z, const Matrix& L,
                    const Matrix& CPi) {
  const Matrix ZL = Z * L;
  return Theta.transpose() - ZL.transpose() + Theta - ZL + CPi.transpose() * CPi;
}

// Block-diagonal M22^{-1} X computed per block.
Matrix block_solve(const Matrix& M22, const std::vector<int>& orders,
                   const Matrix& X) {
  const auto off = block_offsets(orders);
  Matrix out(X.rows(), X.cols());
  for (std::size_t k = 0; k < orders.size(); ++k) {
    const int nk = orders[k];
    out.middleRows(off[k], nk) =
        M22.block(off[k], off[k], nk, nk).ldlt().solve(X.middleRows(off[k], nk));
  }
  return out;
}

// C Pi; with B L = 0 the Sylvester solution Pi = 0 is taken even when the
// spectra touch.
Matrix moments_or_zero(const NetworkSystem& sys, const Matrix& S, const Matrix& L) {
  if ((sys.B * L).isZero(0.0)) return Matrix::Zero(sys.p(), S.rows());
  return moments(sys, S, L);
}

double signed_margin_psd(const Matrix& M) {
  return linalg::min_symmetric_eigenvalue(M) / std::max(1.0, M.norm());
}

}  // namespace

RelaxationSdp build_sdp(const NetworkSystem& sys, const Matrix& L,
                        const ReducedOrders& orders, const Matrix& CPi,
                        SdpFormulation formulation, double scale_bound) {
  orders.validate(sys.topology);
  const int nu = orders.total();
  if (L.rows() != sys.m() || L.cols() != nu) {
    throw Error(ErrorCode::kDimension, "L must be m x nu");
  }
  if (CPi.rows() != sys.p() || CPi.cols() != nu) {
    throw Error(ErrorCode::kDimension, "C Pi must be p x nu");
  }
  RelaxationSdp rel;
  rel.L = L;
  rel.CPi = CPi;
  rel.orders = orders;
  rel.topology = sys.topology;
  rel.scale_bound = scale_bound;
  if (!(scale_bound > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "scale bound must be positive");
  }
  if (formulation == SdpFormulation::kAuto) formulation = SdpFormulation::kCondensed;
  rel.formulation = formulation;
  if (formulation == SdpFormulation::kFull) {
    build_full(rel, sys);
  } else {
    build_condensed(rel, sys);
  }
  return rel;
}

RelaxationVariables extract_variables(const NetworkSystem& sys,
                                      const RelaxationSdp& rel,
                                      const Vector& x) {
  RelaxationVariables v;
  v.M22 = assemble_m22(rel, x);
  v.Z22 = rel.Z22.value(x);
  v.Theta22 = rel.Theta22.value(x);
  if (rel.formulation == SdpFormulation::kFull) {
    v.M11 = rel.M11.value(x);
    v.X22 = rel.X22.value(x);
    v.Y22 = rel.Y22.value(x);
    return v;
  }
  v.Y22 = slack_matrix(v.Theta22, v.Z22, rel.L, rel.CPi);
  const Matrix CtCPi = sys.C.transpose() * rel.CPi;
  const Matrix Q = sys.C.transpose() * sys.C +
                   CtCPi * (-v.Y22).ldlt().solve(CtCPi.transpose());
  v.M11 = linalg::solve_lyapunov(sys.A, 0.5 * (Q + Q.transpose()),
                                 linalg::LyapunovSide::kObservability);
  const Matrix X = v.Z22.transpose() * block_solve(v.M22, rel.orders.orders, v.Z22);
  v.X22 = 0.5 * (X + X.transpose());
  return v;
}

RelaxationAudit audit_relaxation(const NetworkSystem& sys,
                                 const RelaxationSdp& rel,
                                 const RelaxationVariables& v, double tol) {
  RelaxationAudit a;
  const int n = sys.n(), m = sys.m(), nu = rel.orders.total();
  const Matrix& CPi = rel.CPi;

  const Matrix slack = v.Y22 - slack_matrix(v.Theta22, v.Z22, rel.L, CPi);
  a.margins.emplace_back("slack", signed_margin_psd(slack));

  Matrix schur(m + nu, m + nu);
  schur << v.X22, v.Z22.transpose(), v.Z22, v.M22;
  a.margins.emplace_back("schur", signed_margin_psd(schur));

  Matrix lyap(n + nu, n + nu);
  lyap << sys.A.transpose() * v.M11 + v.M11 * sys.A + sys.C.transpose() * sys.C,
      -sys.C.transpose() * CPi, -CPi.transpose() * sys.C, v.Y22;
  a.margins.emplace_back("lyapunov", signed_margin_psd(-lyap));
  a.margins.emplace_back("M11", signed_margin_psd(v.M11));
  a.margins.emplace_back("M22", signed_margin_psd(v.M22));

  // Structure: forbidden blocks of Theta - Z L, off-block entries of M22,
  // masked entries of Z.
  const Matrix D = v.Theta22 - v.Z22 * rel.L;
  const auto off = block_offsets(rel.orders.orders);
  const double scale = std::max(1.0, v.Theta22.norm() + v.Z22.norm() * rel.L.norm());
  double worst = 0.0;
  for (const BlockIndex& b : forbidden_state_blocks(rel.topology)) {
    worst = std::max(worst, D.block(off[b.first], off[b.second],
                                    rel.orders.orders[b.first], rel.orders.orders[b.second])
                                .cwiseAbs()
                                .maxCoeff());
  }
  for (int i = 0; i < rel.topology.N; ++i)
    for (int j = 0; j < rel.topology.N; ++j) {
      if (i == j) continue;
      worst = std::max(worst, v.M22.block(off[i], off[j], rel.orders.orders[i],
                                          rel.orders.orders[j])
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  for (const BlockIndex& b : input_structure_violations(v.Z22, rel.topology, rel.orders)) {
    (void)b;
    worst = std::max(worst, 1.0);
  }
  a.structure_residual = worst / scale;
  a.objective = (sys.B.transpose() * v.M11 * sys.B).trace() + v.X22.trace();
  a.passed = a.structure_residual <= tol;
  for (const auto& [name, margin] : a.margins)
    if (margin < -tol) a.passed = false;
  return a;
}

Recovery recover_reduced(const RelaxationVariables& v, const NetworkSystem& sys,
                         const Matrix& L, const ReducedOrders& orders) {
  Recovery rec;
  Matrix M22 = v.M22;
  const double hi = linalg::max_symmetric_eigenvalue(M22);
  const double lo = linalg::min_symmetric_eigenvalue(M22);
  if (!(hi > 0.0)) {
    throw Error(ErrorCode::kInfeasible, "M22 is not positive definite; cannot recover S, G");
  }
  if (lo < kM22Ridge * hi) {
    M22.diagonal().array() += kM22Ridge * hi;
    rec.ridge_applied = true;
    std::ostringstream os;
    os << "M22 nearly singular (min eig " << lo << ", max eig " << hi
       << "); ridge " << kM22Ridge * hi << " added before inversion";
    rec.warnings.push_back(os.str());
  }
  const Matrix S = block_solve(M22, orders.orders, v.Theta22);
  const Matrix G = block_solve(M22, orders.orders, v.Z22);
  try {
    rec.model = build_reduced(sys, S, G, L, orders);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnstable) throw;
    std::ostringstream os;
    os << e.what() << "; spectrum of S - GL:";
    for (const Complex& z : linalg::spectrum(S - G * L).eigenvalues)
      os << " " << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
    throw Error(ErrorCode::kUnstable, os.str());
  }
  for (const std::string& w : rec.model.warnings) rec.warnings.push_back(w);
  const int n = sys.n(), nu = orders.total();
  rec.M = Matrix::Zero(n + nu, n + nu);
  rec.M.topLeftCorner(n, n) = v.M11;
  rec.M.bottomRightCorner(nu, nu) = v.M22;
  return rec;
}

CertificateCheck check_sufficient_conditions(const NetworkSystem& sys,
                                             const Matrix& S, const Matrix& G,
                                             const Matrix& L,
                                             const BlockDiagCertificate& cert,
                                             double tol) {
  if (!(linalg::min_symmetric_eigenvalue(cert.P) > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "certificate P is not positive definite");
  }
  const Matrix CPi = moments_or_zero(sys, S, L);
  const Matrix F = S - G * L;
  const Matrix CtCPi = sys.C.transpose() * CPi;
  const Matrix first = sys.A.transpose() * cert.M11 + cert.M11 * sys.A +
                       sys.C.transpose() * sys.C +
                       CtCPi * cert.P.ldlt().solve(CtCPi.transpose());
  const Matrix second = F.transpose() * cert.M22 + cert.M22 * F +
                        CPi.transpose() * CPi + cert.P;
  CertificateCheck c;
  c.first_max_eig = linalg::max_symmetric_eigenvalue(first);
  c.second_max_eig = linalg::max_symmetric_eigenvalue(second);
  c.m11_min_eig = linalg::min_symmetric_eigenvalue(cert.M11);
  c.m22_min_eig = linalg::min_symmetric_eigenvalue(cert.M22);
  c.passed = c.first_max_eig <= tol && c.second_max_eig <= tol &&
             c.m11_min_eig >= -tol && c.m22_min_eig >= -tol;
  return c;
}

std::optional<BlockDiagCertificate> construct_certificate(
    const NetworkSystem& sys, const Matrix& S_seed, const Matrix& L) {
  linalg::require_square(S_seed, "S_seed");
  const int nu = static_cast<int>(S_seed.rows());
  if (!linalg::is_hurwitz(S_seed)) {
    throw Error(ErrorCode::kUnstable, "certificate seed S must be Hurwitz");
  }
  BlockDiagCertificate cert;
  cert.S = S_seed;
  cert.G = Matrix::Zero(nu, sys.m());
  const Matrix CPi = moments_or_zero(sys, S_seed, L);
  cert.P = -S_seed.transpose() - S_seed - CPi.transpose() * CPi;
  cert.P = 0.5 * (cert.P + cert.P.transpose());
  if (!(linalg::min_symmetric_eigenvalue(cert.P) > 0.0)) return std::nullopt;
  const Matrix CtCPi = sys.C.transpose() * CPi;
  const Matrix Q = sys.C.transpose() * sys.C +
                   CtCPi * cert.P.ldlt().solve(CtCPi.transpose());
  cert.M11 = linalg::solve_lyapunov(sys.A, 0.5 * (Q + Q.transpose()),
                                    linalg::LyapunovSide::kObservability);
  cert.M22 = Matrix::Identity(nu, nu);
  return cert;
}

}  // namespace netred
