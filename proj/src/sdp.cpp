#include "netred/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "netred/error.hpp"

namespace netred::sdp {

Lmi::Lmi(std::string name, int dim)
    : name_(std::move(name)), dim_(dim), F0_(Matrix::Zero(dim, dim)) {}

void Lmi::add(int var, int r, int c, double v) {
  if (r < 0 || c < 0 || r >= dim_ || c >= dim_) {
    throw Error(ErrorCode::kDimension, "LMI entry out of range in " + name_);
  }
  if (v == 0.0) return;
  if (r > c) std::swap(r, c);
  raw_[var][{r, c}] += v;
  dirty_ = true;
}

void Lmi::add_dense(int var, int off, const Matrix& K) {
  for (int j = 0; j < K.cols(); ++j)
    for (int i = 0; i <= j; ++i)
      if (K(i, j) != 0.0) add(var, off + i, off + j, K(i, j));
}

const std::map<int, std::vector<Lmi::Entry>>& Lmi::terms() const {
  if (dirty_) {
    terms_.clear();
    for (const auto& [var, entries] : raw_) {
      std::vector<Entry> out;
      for (const auto& [rc, v] : entries)
        if (v != 0.0) out.push_back({rc.first, rc.second, v});
      if (!out.empty()) terms_[var] = std::move(out);
    }
    dirty_ = false;
  }
  return terms_;
}

Matrix Lmi::evaluate(const Vector& x) const {
  Matrix F = F0_;
  for (const auto& [var, entries] : terms()) {
    const double xv = x(var);
    if (xv == 0.0) continue;
    for (const Entry& e : entries) {
      F(e.r, e.c) += xv * e.v;
      if (e.r != e.c) F(e.c, e.r) += xv * e.v;
    }
  }
  return F;
}

int SdpProblem::add_vars(int count) {
  const int first = num_vars;
  num_vars += count;
  c.conservativeResize(num_vars);
  c.tail(count).setZero();
  return first;
}

std::string_view to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kMaxIterations: return "max-iterations";
    case SdpStatus::kInfeasible: return "infeasible-detected";
  }
  return "unknown";
}

namespace {

using Entry = Lmi::Entry;

struct Block {
  int dim = 0;
  Matrix F0;
  std::vector<int> vars;                   // reduced variable indices
  std::vector<std::vector<Entry>> coeffs;  // parallel to vars
};

struct Reduced {
  int nv = 0;
  Vector c;
  double c0 = 0.0;
  std::vector<Block> blocks;
  int barrier_dim = 0;
};

// x = base + T y with T sparse (one column list per full variable).
struct Elimination {
  std::vector<int> free_vars;  // reduced index -> full index
  std::vector<int> reduced_of; // full index -> reduced index or -1
  // pivot full index -> (constant, [(reduced index, coefficient)])
  std::map<int, std::pair<double, std::map<int, double>>> pivots;

  Vector expand(const Vector& y, int n) const {
    Vector x = Vector::Zero(n);
    for (std::size_t k = 0; k < free_vars.size(); ++k) x(free_vars[k]) = y(k);
    for (const auto& [p, expr] : pivots) {
      double v = expr.first;
      for (const auto& [k, e] : expr.second) v += e * y(k);
      x(p) = v;
    }
    return x;
  }
};

Elimination eliminate(const SdpProblem& prob) {
  const int n = prob.num_vars;
  // Expressions of pivot variables in terms of other full variables.
  std::map<int, std::pair<double, std::map<int, double>>> piv;
  const double tiny = 1e-13;
  for (const LinearEquality& eq : prob.equalities) {
    std::map<int, double> row;
    double rhs = eq.rhs;
    for (const auto& [j, a] : eq.coeffs) {
      if (j < 0 || j >= n) throw Error(ErrorCode::kDimension, "equality index out of range");
      row[j] += a;
    }
    // Substitute existing pivots.
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto it = row.begin(); it != row.end(); ++it) {
        auto pit = piv.find(it->first);
        if (pit == piv.end()) continue;
        const double a = it->second;
        row.erase(it);
        rhs -= a * pit->second.first;
        for (const auto& [j, e] : pit->second.second) row[j] += a * e;
        changed = true;
        break;
      }
    }
    double scale = 0.0;
    for (const auto& [j, a] : row) scale = std::max(scale, std::abs(a));
    for (auto it = row.begin(); it != row.end();) {
      if (std::abs(it->second) <= tiny * std::max(1.0, scale)) {
        it = row.erase(it);
      } else {
        ++it;
      }
    }
    if (row.empty()) {
      if (std::abs(rhs) > 1e-10 * std::max(1.0, std::abs(eq.rhs))) {
        throw Error(ErrorCode::kInfeasible, "inconsistent linear equalities");
      }
      continue;
    }
    int p = row.begin()->first;
    for (const auto& [j, a] : row)
      if (std::abs(a) > std::abs(row[p])) p = j;
    const double ap = row[p];
    std::pair<double, std::map<int, double>> expr{rhs / ap, {}};
    for (const auto& [j, a] : row)
      if (j != p) expr.second[j] = -a / ap;
    // Back-substitute into earlier pivots.
    for (auto& [q, qe] : piv) {
      auto it = qe.second.find(p);
      if (it == qe.second.end()) continue;
      const double a = it->second;
      qe.second.erase(it);
      qe.first += a * expr.first;
      for (const auto& [j, e] : expr.second) qe.second[j] += a * e;
    }
    piv[p] = std::move(expr);
  }
  Elimination el;
  el.reduced_of.assign(n, -1);
  for (int j = 0; j < n; ++j) {
    if (piv.count(j)) continue;
    el.reduced_of[j] = static_cast<int>(el.free_vars.size());
    el.free_vars.push_back(j);
  }
  for (const auto& [p, expr] : piv) {
    std::map<int, double> red;
    for (const auto& [j, e] : expr.second) red[el.reduced_of.at(j)] += e;
    el.pivots[p] = {expr.first, std::move(red)};
  }
  return el;
}

Reduced reduce(const SdpProblem& prob, const Elimination& el) {
  Reduced R;
  R.nv = static_cast<int>(el.free_vars.size());
  R.c = Vector::Zero(R.nv);
  R.c0 = prob.c0;
  for (int k = 0; k < R.nv; ++k) R.c(k) = prob.c(el.free_vars[k]);
  for (const auto& [p, expr] : el.pivots) {
    R.c0 += prob.c(p) * expr.first;
    for (const auto& [k, e] : expr.second) R.c(k) += prob.c(p) * e;
  }
  for (const Lmi& lmi : prob.lmis) {
    Block b;
    b.dim = lmi.dim();
    b.F0 = lmi.constant();
    std::map<int, std::map<std::pair<int, int>, double>> acc;
    for (const auto& [var, entries] : lmi.terms()) {
      auto pit = el.pivots.find(var);
      if (pit == el.pivots.end()) {
        auto& m = acc[el.reduced_of[var]];
        for (const Entry& e : entries) m[{e.r, e.c}] += e.v;
        continue;
      }
      const double k0 = pit->second.first;
      for (const Entry& e : entries) {
        b.F0(e.r, e.c) += k0 * e.v;
        if (e.r != e.c) b.F0(e.c, e.r) += k0 * e.v;
      }
      for (const auto& [k, w] : pit->second.second) {
        auto& m = acc[k];
        for (const Entry& e : entries) m[{e.r, e.c}] += w * e.v;
      }
    }
    for (const auto& [k, m] : acc) {
      std::vector<Entry> es;
      double scale = 0.0;
      for (const auto& [rc, v] : m) scale = std::max(scale, std::abs(v));
      for (const auto& [rc, v] : m)
        if (std::abs(v) > 1e-15 * scale) es.push_back({rc.first, rc.second, v});
      if (es.empty()) continue;
      b.vars.push_back(k);
      b.coeffs.push_back(std::move(es));
    }
    R.barrier_dim += b.dim;
    R.blocks.push_back(std::move(b));
  }
  return R;
}

Matrix block_value(const Block& b, const Vector& y) {
  Matrix F = b.F0;
  for (std::size_t a = 0; a < b.vars.size(); ++a) {
    const double v = y(b.vars[a]);
    if (v == 0.0) continue;
    for (const Entry& e : b.coeffs[a]) {
      F(e.r, e.c) += v * e.v;
      if (e.r != e.c) F(e.c, e.r) += v * e.v;
    }
  }
  return F;
}


// Sum over blocks of <F_a, X_blk> for every reduced variable a.
Vector adjoint(const Reduced& R, const std::vector<Matrix>& X) {
  Vector out = Vector::Zero(R.nv);
  for (std::size_t k = 0; k < R.blocks.size(); ++k) {
    const Block& b = R.blocks[k];
    for (std::size_t a = 0; a < b.vars.size(); ++a) {
      double s = 0.0;
      for (const Entry& e : b.coeffs[a])
        s += e.r == e.c ? e.v * X[k](e.r, e.r) : e.v * (X[k](e.r, e.c) + X[k](e.c, e.r));
      out(b.vars[a]) += s;
    }
  }
  return out;
}

Matrix block_direction(const Block& b, const Vector& dy) {
  Matrix F = Matrix::Zero(b.dim, b.dim);
  for (std::size_t a = 0; a < b.vars.size(); ++a) {
    const double v = dy(b.vars[a]);
    if (v == 0.0) continue;
    for (const Entry& e : b.coeffs[a]) {
      F(e.r, e.c) += v * e.v;
      if (e.r != e.c) F(e.c, e.r) += v * e.v;
    }
  }
  return F;
}

Matrix sym(const Matrix& X) { return 0.5 * (X + X.transpose()); }

// Largest alpha with X + alpha dX positive semidefinite.
double max_step(const Matrix& X, const Matrix& dX) {
  Eigen::LLT<Matrix> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  const Matrix Li = llt.matrixL().solve(Matrix::Identity(X.rows(), X.cols()));
  const double lo = linalg::min_symmetric_eigenvalue(sym(Li * dX * Li.transpose()));
  return lo >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lo;
}

// Schur complement M_ab = sum_k tr(F_a S^-1 F_b Z) of the HKM direction.
Matrix schur_matrix(const Reduced& R, const std::vector<Matrix>& Sinv,
                    const std::vector<Matrix>& Z) {
  Matrix M = Matrix::Zero(R.nv, R.nv);
  for (std::size_t k = 0; k < R.blocks.size(); ++k) {
    const Block& b = R.blocks[k];
    std::vector<int> pos(b.dim, -1);
    for (std::size_t a = 0; a < b.vars.size(); ++a) {
      const auto& ea = b.coeffs[a];
      std::vector<int> rows;
      for (const Entry& e : ea) {
        rows.push_back(e.r);
        rows.push_back(e.c);
      }
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
      const int nr = static_cast<int>(rows.size());
      for (int i = 0; i < nr; ++i) pos[rows[i]] = i;
      Matrix W = Matrix::Zero(nr, b.dim);  // rows of F_a Z
      for (const Entry& e : ea) {
        W.row(pos[e.r]) += e.v * Z[k].row(e.c);
        if (e.r != e.c) W.row(pos[e.c]) += e.v * Z[k].row(e.r);
      }
      Matrix Sc(b.dim, nr);
      for (int i = 0; i < nr; ++i) Sc.col(i) = Sinv[k].col(rows[i]);
      const Matrix P = Sc * W;  // S^-1 F_a Z
      for (int i = 0; i < nr; ++i) pos[rows[i]] = -1;
      const int ia = b.vars[a];
      for (std::size_t c2 = 0; c2 < b.vars.size(); ++c2) {
        double h = 0.0;
        for (const Entry& e : b.coeffs[c2])
          h += e.r == e.c ? e.v * P(e.r, e.r) : e.v * (P(e.r, e.c) + P(e.c, e.r));
        M(ia, b.vars[c2]) += h;
      }
    }
  }
  return sym(M);
}

struct Iterate {
  Vector y;
  std::vector<Matrix> S;
  std::vector<Matrix> Z;
};

double inner(const std::vector<Matrix>& A, const std::vector<Matrix>& B) {
  double s = 0.0;
  for (std::size_t k = 0; k < A.size(); ++k) s += A[k].cwiseProduct(B[k]).sum();
  return s;
}

}  // namespace

AuditReport audit(const SdpProblem& prob, const Vector& x, double tol) {
  AuditReport rep;
  rep.passed = true;
  for (const Lmi& lmi : prob.lmis) {
    const Matrix F = lmi.evaluate(x);
    Eigen::SelfAdjointEigenSolver<Matrix> es(F, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0);
    const double hi = std::max(std::abs(lo), std::abs(es.eigenvalues()(F.rows() - 1)));
    rep.min_eigenvalues.push_back(lo);
    if (lo < -tol * std::max(1.0, hi)) rep.passed = false;
  }
  for (const LinearEquality& eq : prob.equalities) {
    double v = -eq.rhs;
    double s = std::abs(eq.rhs);
    for (const auto& [j, a] : eq.coeffs) {
      v += a * x(j);
      s = std::max(s, std::abs(a * x(j)));
    }
    rep.equality_residual = std::max(rep.equality_residual, std::abs(v) / std::max(1.0, s));
  }
  if (rep.equality_residual > tol) rep.passed = false;
  return rep;
}


SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opts,
                      const Vector* start) {
  if (prob.c.size() != prob.num_vars) {
    throw Error(ErrorCode::kDimension, "objective vector has wrong length");
  }
  const Elimination el = eliminate(prob);
  const Reduced R = reduce(prob, el);
  const std::size_t nb = R.blocks.size();
  const double n_tot = std::max(1, R.barrier_dim);
  SdpSolution sol;

  Iterate it;
  it.y = Vector::Zero(R.nv);
  if (start) {
    if (start->size() != prob.num_vars) {
      throw Error(ErrorCode::kDimension, "start vector has wrong length");
    }
    for (int k = 0; k < R.nv; ++k) it.y(k) = (*start)(el.free_vars[k]);
  }
  double f0_norm = 0.0;
  bool feasible_start = true;
  for (const Block& b : R.blocks) {
    f0_norm = std::max(f0_norm, b.F0.norm());
    Matrix F = block_value(b, it.y);
    const double lo = linalg::min_symmetric_eigenvalue(F);
    if (!(lo > 0.0)) {
      feasible_start = false;
      F.diagonal().array() += -lo + std::max(1.0, 0.1 * F.norm());
    }
    it.S.push_back(F);
    it.Z.push_back(Matrix::Identity(b.dim, b.dim));
  }
  sol.used_phase1 = !feasible_start;
  bool primal_feasible = feasible_start;
  const double c_norm = R.c.norm();

  auto residuals = [&](const Iterate& s, std::vector<Matrix>& Rp, Vector& rd) {
    Rp.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      Rp[k] = primal_feasible ? Matrix::Zero(R.blocks[k].dim, R.blocks[k].dim)
                              : Matrix(block_value(R.blocks[k], s.y) - s.S[k]);
    }
    rd = R.c - adjoint(R, s.Z);
  };

  double pinf = 0.0, dinf = 0.0, gap = 0.0, pobj = 0.0, dobj = 0.0;
  double best_merit = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  for (int iter = 0;; ++iter) {
    std::vector<Matrix> Rp;
    Vector rd;
    residuals(it, Rp, rd);
    pinf = 0.0;
    for (const Matrix& r : Rp) pinf = std::max(pinf, r.norm());
    pinf /= 1.0 + f0_norm;
    dinf = rd.norm() / (1.0 + c_norm);
    gap = inner(it.S, it.Z);
    pobj = R.c.dot(it.y) + R.c0;
    dobj = R.c0;
    for (std::size_t k = 0; k < nb; ++k) dobj -= R.blocks[k].F0.cwiseProduct(it.Z[k]).sum();
    sol.newton_steps = iter;
    if (gap <= opts.tol * (1.0 + std::abs(pobj)) && pinf <= opts.tol && dinf <= opts.tol) {
      sol.status = SdpStatus::kOptimal;
      break;
    }
    // Farkas certificate: Z >= 0 with <F_a, Z> = 0 and <F0, Z> < 0.
    const double f0z = dobj - R.c0;
    if (f0z > 0.0) {
      const double farkas = (R.c - rd).norm() / f0z;
      if (farkas <= 1e-8 && f0z > 1e6) {
        sol.status = SdpStatus::kInfeasible;
        std::ostringstream os;
        os << "dual ray with <F0, Z> = " << -f0z << " and relative residual " << farkas;
        sol.message = os.str();
        break;
      }
    }
    const double merit = std::max({gap / (1.0 + std::abs(pobj)), pinf, dinf});
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      best_iter = iter;
    } else if (iter - best_iter >= opts.stall_iterations) {
      sol.status = SdpStatus::kMaxIterations;
      std::ostringstream os;
      os << "stalled at gap " << gap << ", primal " << pinf << ", dual " << dinf;
      sol.message = os.str();
      break;
    }
    if (iter >= opts.max_iterations) {
      sol.status = SdpStatus::kMaxIterations;
      std::ostringstream os;
      os << "iteration limit reached (gap " << gap << ", primal " << pinf << ", dual " << dinf << ")";
      sol.message = os.str();
      break;
    }

    std::vector<Matrix> Sinv(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      Eigen::LLT<Matrix> llt(it.S[k]);
      Sinv[k] = sym(llt.solve(Matrix::Identity(it.S[k].rows(), it.S[k].cols())));
    }
    Matrix M = schur_matrix(R, Sinv, it.Z);
    // Jacobi-scaled factorization; variables absent from every block get a
    // unit pivot.
    Vector dscale(R.nv);
    for (int i = 0; i < R.nv; ++i) {
      const double d = std::abs(M(i, i));
      dscale(i) = d > 1e-300 ? 1.0 / std::sqrt(d) : 1.0;
    }
    Matrix Ms = dscale.asDiagonal() * M * dscale.asDiagonal();
    for (int i = 0; i < R.nv; ++i) Ms(i, i) = Ms(i, i) == 0.0 ? 1.0 : Ms(i, i) + 1e-15;
    const Eigen::LDLT<Matrix> ldlt(Ms);
    auto schur_solve = [&](const Vector& r) -> Vector {
      return dscale.asDiagonal() * ldlt.solve(dscale.asDiagonal() * r);
    };
    const double mu = gap / n_tot;

    // Solves for (dy, dS, dZ) given the complementarity right-hand side T_k,
    // where dZ = T_k - S^-1 dS Z.
    auto direction = [&](const std::vector<Matrix>& T, Vector& dy,
                         std::vector<Matrix>& dS, std::vector<Matrix>& dZ) {
      std::vector<Matrix> rhs_m(nb);
      for (std::size_t k = 0; k < nb; ++k) rhs_m[k] = sym(T[k] - Sinv[k] * Rp[k] * it.Z[k]);
      const Vector rhs = adjoint(R, rhs_m) - rd;
      dy = schur_solve(rhs);
      for (int r = 0; r < 2; ++r) dy += schur_solve(rhs - M * dy);
      dS.resize(nb);
      dZ.resize(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        dS[k] = block_direction(R.blocks[k], dy) + Rp[k];
        dZ[k] = sym(T[k] - Sinv[k] * dS[k] * it.Z[k]);
      }
    };
    auto step_lengths = [&](const std::vector<Matrix>& dS, const std::vector<Matrix>& dZ,
                            double& ap, double& ad) {
      ap = ad = 1.0 / opts.step_fraction;
      for (std::size_t k = 0; k < nb; ++k) {
        ap = std::min(ap, max_step(it.S[k], dS[k]));
        ad = std::min(ad, max_step(it.Z[k], dZ[k]));
      }
      ap = std::min(1.0, opts.step_fraction * ap);
      ad = std::min(1.0, opts.step_fraction * ad);
    };

    // Predictor.
    std::vector<Matrix> T(nb);
    for (std::size_t k = 0; k < nb; ++k) T[k] = -it.Z[k];
    Vector dy_a;
    std::vector<Matrix> dS_a, dZ_a;
    direction(T, dy_a, dS_a, dZ_a);
    double ap = 0.0, ad = 0.0;
    step_lengths(dS_a, dZ_a, ap, ad);
    double gap_a = 0.0;
    for (std::size_t k = 0; k < nb; ++k)
      gap_a += (it.S[k] + ap * dS_a[k]).cwiseProduct(it.Z[k] + ad * dZ_a[k]).sum();
    const double ratio = std::clamp(gap_a / std::max(gap, 1e-300), 0.0, 1.0);
    const double sigma = ratio * ratio * ratio;

    // Corrector.
    for (std::size_t k = 0; k < nb; ++k)
      T[k] = sigma * mu * Sinv[k] - it.Z[k] - Sinv[k] * dS_a[k] * dZ_a[k];
    Vector dy;
    std::vector<Matrix> dS, dZ;
    direction(T, dy, dS, dZ);
    step_lengths(dS, dZ, ap, ad);

    it.y += ap * dy;
    for (std::size_t k = 0; k < nb; ++k) {
      it.S[k] = sym(it.S[k] + ap * dS[k]);
      it.Z[k] = sym(it.Z[k] + ad * dZ[k]);
    }
    if (!primal_feasible && ap >= 1.0) {
      bool ok = true;
      std::vector<Matrix> F(nb);
      for (std::size_t k = 0; k < nb && ok; ++k) {
        F[k] = block_value(R.blocks[k], it.y);
        ok = Eigen::LLT<Matrix>(F[k]).info() == Eigen::Success;
      }
      if (ok) {
        it.S = std::move(F);
        primal_feasible = true;
      }
    }
  }

  sol.x = el.expand(it.y, prob.num_vars);
  sol.objective = prob.objective(sol.x);
  sol.dual_objective = dobj;
  sol.duality_gap = gap;
  sol.kkt_residual = std::max({gap / (1.0 + std::abs(pobj)), pinf, dinf});
  const AuditReport a = audit(prob, sol.x, opts.tol);
  double worst_eig = 0.0;
  for (double v : a.min_eigenvalues) worst_eig = std::min(worst_eig, v);
  sol.primal_residual = std::max(a.equality_residual, -worst_eig);
  return sol;
}

}  // namespace netred::sdp
