#pragma once

// Convex relaxation with a block-diagonal observability Gramian
// diag(M11, M22), recovery of (S, G) from its solution and the
// sufficient-condition certificate for block-diagonal Gramians.

#include <optional>
#include <string>
#include <vector>

#include "netred/network.hpp"
#include "netred/sdp.hpp"

namespace netred {

enum class SdpFormulation {
  kAuto,       // condensed
  kFull,       // every variable of the relaxation kept explicitly
  kCondensed,  // M11, Y22 and X22 eliminated in closed form
};

/// Scale bound tr(M22) <= rho, tr(Theta22) >= -rho. The relaxation infimum
/// is approached only as M22 and -Theta22 grow without bound, so the bounded
/// problem is what the barrier solver actually optimizes.
inline constexpr double kDefaultScaleBound = 1e6;

/// Contiguous group of scalar SDP variables forming one matrix.
struct VarBlock {
  int offset = -1;
  int rows = 0;
  int cols = 0;
  bool symmetric = false;

  bool empty() const { return offset < 0; }
  int count() const { return symmetric ? rows * (rows + 1) / 2 : rows * cols; }
  int index(int i, int j) const;
  Matrix value(const Vector& x) const;
};

struct RelaxationSdp {
  sdp::SdpProblem problem;
  SdpFormulation formulation = SdpFormulation::kFull;
  Matrix L;
  Matrix CPi;
  ReducedOrders orders;
  Topology topology;

  VarBlock M11;                // full only
  std::vector<VarBlock> M22;   // one symmetric block per subsystem
  VarBlock X22;                // full only
  VarBlock Y22;                // full only
  VarBlock Z22;
  VarBlock Theta22;
  VarBlock U;                  // condensed only
  std::vector<int> t_vars;     // condensed only

  int structure_equalities = 0;
  int input_equalities = 0;
  double norm_K_squared = 0.0;
  double scale_bound = kDefaultScaleBound;
  Vector start;                // strictly feasible point
};

/// diag(1, 2, ..., nu).
Matrix default_s_grid(int nu);

/// Number of scalar variables of the full formulation.
int full_variable_count(const NetworkSystem& sys, const ReducedOrders& orders);

RelaxationSdp build_sdp(const NetworkSystem& sys, const Matrix& L,
                        const ReducedOrders& orders, const Matrix& CPi,
                        SdpFormulation formulation = SdpFormulation::kAuto,
                        double scale_bound = kDefaultScaleBound);

/// Relaxation variables in matrix form. For the condensed formulation the
/// eliminated blocks are reconstructed from their closed forms.
struct RelaxationVariables {
  Matrix M11;
  Matrix M22;
  Matrix X22;
  Matrix Y22;
  Matrix Z22;
  Matrix Theta22;
};

RelaxationVariables extract_variables(const NetworkSystem& sys,
                                      const RelaxationSdp& rel,
                                      const Vector& x);

struct RelaxationAudit {
  std::vector<std::pair<std::string, double>> margins;  // signed, >= 0 is feasible
  double structure_residual = 0.0;
  double objective = 0.0;  // tr(B^T M11 B + X22)
  bool passed = false;
};

/// Checks every matrix inequality of the relaxation directly on the
/// matrices, independently of the solver's LMI encoding.
RelaxationAudit audit_relaxation(const NetworkSystem& sys,
                                 const RelaxationSdp& rel,
                                 const RelaxationVariables& v, double tol);

struct Recovery {
  ReducedNetwork model;
  Matrix M;  // diag(M11, M22)
  bool ridge_applied = false;
  std::vector<std::string> warnings;
};

inline constexpr double kM22Ridge = 1e-10;

/// S = M22^{-1} Theta22, G = M22^{-1} Z22.
Recovery recover_reduced(const RelaxationVariables& v, const NetworkSystem& sys,
                         const Matrix& L, const ReducedOrders& orders);

struct BlockDiagCertificate {
  Matrix M11;
  Matrix M22;
  Matrix P;
  Matrix S;
  Matrix G;
};

struct CertificateCheck {
  bool passed = false;
  // Largest eigenvalues of the two left-hand sides (must be <= 0).
  double first_max_eig = 0.0;
  double second_max_eig = 0.0;
  double m11_min_eig = 0.0;
  double m22_min_eig = 0.0;
};

CertificateCheck check_sufficient_conditions(const NetworkSystem& sys,
                                             const Matrix& S, const Matrix& G,
                                             const Matrix& L,
                                             const BlockDiagCertificate& cert,
                                             double tol = 1e-8);

/// Certificate with G = 0 and M22 = I; empty when the implied P is not
/// positive definite.
std::optional<BlockDiagCertificate> construct_certificate(
    const NetworkSystem& sys, const Matrix& S_seed, const Matrix& L);

}  // namespace netred
