#pragma once

// Small dense semidefinite programs:
//   minimize    c^T x + c0
//   subject to  F_k(x) = F_k0 + sum_i x_i F_ki  >= 0   (each LMI block k)
//               E x = d
// solved by an infeasible-start primal-dual interior-point method (HKM
// direction, Mehrotra predictor-corrector).

#include <map>
#include <string>
#include <vector>

#include "netred/linalg.hpp"

namespace netred::sdp {

/// One symmetric affine block. Coefficient matrices are sparse; an entry
/// (r, c, v) with r <= c stands for F(r, c) = F(c, r) = v.
class Lmi {
 public:
  struct Entry {
    int r;
    int c;
    double v;
  };

  Lmi(std::string name, int dim);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }

  Matrix& constant() { return F0_; }
  const Matrix& constant() const { return F0_; }

  /// Adds v at (r, c) and (c, r) of the coefficient matrix of variable var.
  void add(int var, int r, int c, double v);
  /// Adds the symmetric dense matrix K at diagonal offset (off, off).
  void add_dense(int var, int off, const Matrix& K);

  /// Coefficient terms keyed by variable, merged and sorted.
  const std::map<int, std::vector<Entry>>& terms() const;

  Matrix evaluate(const Vector& x) const;

 private:
  std::string name_;
  int dim_;
  Matrix F0_;
  mutable std::map<int, std::map<std::pair<int, int>, double>> raw_;
  mutable std::map<int, std::vector<Entry>> terms_;
  mutable bool dirty_ = true;
};

struct LinearEquality {
  std::vector<std::pair<int, double>> coeffs;
  double rhs = 0.0;
};

struct SdpProblem {
  int num_vars = 0;
  Vector c;
  double c0 = 0.0;
  std::vector<Lmi> lmis;
  std::vector<LinearEquality> equalities;

  int add_vars(int count);
  double objective(const Vector& x) const { return c.dot(x) + c0; }
};

enum class SdpStatus { kOptimal, kMaxIterations, kInfeasible };

std::string_view to_string(SdpStatus s);

struct SdpOptions {
  double tol = 1e-7;            // relative gap and feasibility target
  int max_iterations = 150;
  int stall_iterations = 15;    // stop when the residuals stop shrinking
  double step_fraction = 0.98;  // fraction of the distance to the boundary
};

struct SdpSolution {
  SdpStatus status = SdpStatus::kMaxIterations;
  Vector x;
  double objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;     // <S, Z>
  double primal_residual = 0.0;
  double kkt_residual = 0.0;
  int newton_steps = 0;
  bool used_phase1 = false;     // start missing or not strictly feasible
  std::string message;
};

struct AuditReport {
  std::vector<double> min_eigenvalues;  // per LMI, scaled by max(1, |F|)
  double equality_residual = 0.0;
  bool passed = false;
};

/// Independent eigenvalue feasibility check of x.
AuditReport audit(const SdpProblem& prob, const Vector& x, double tol);

/// Solves prob. A strictly feasible start keeps every iterate feasible;
/// otherwise the primal residual is driven to zero along the way.
SdpSolution solve_sdp(const SdpProblem& prob, const SdpOptions& opts = {},
                      const Vector* start = nullptr);

}  // namespace netred::sdp
