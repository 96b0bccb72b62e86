#pragma once

// Block-partitioned network systems, the moment-matching family
// (S, G, L) -> (F = S - GL, G, H = C Pi) and the error-system quantities
// built on top of it.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "netred/linalg.hpp"

namespace netred {

using IndexSets = std::vector<std::vector<int>>;

/// Subsystem partition and interconnection graph. Indices are 0-based.
struct Topology {
  int N = 0;
  std::vector<int> sizes;
  IndexSets state_neighbors;
  std::optional<IndexSets> input_neighbors;
  // Column partition of B when input_neighbors is present; defaults to one
  // input per subsystem.
  std::vector<int> input_sizes;
  int m = 0;
  int p = 0;

  int n() const;
  bool state_coupled(int i, int j) const;
  bool input_coupled(int i, int j) const;

  /// Throws kInvalidArgument on any broken invariant.
  void validate() const;

  static Topology full(std::vector<int> sizes, int m, int p);
};

/// Prefix offsets for a block partition (size N + 1).
std::vector<int> block_offsets(const std::vector<int>& sizes);

/// Column partition of B by subsystem (input_sizes or one input each).
std::vector<int> input_partition(const Topology& t);

struct NetworkSystem {
  Matrix A;
  Matrix B;
  Matrix C;
  Topology topology;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int p() const { return static_cast<int>(C.rows()); }
};

/// Checks dimensions, Hurwitz A and exact-zero forbidden blocks of A and B.
void validate_system(const NetworkSystem& sys);

struct ReducedOrders {
  std::vector<int> orders;

  int total() const;
  void validate(const Topology& topology) const;
};

/// Reduced model of the moment-matching family. F is S - GL with the
/// forbidden blocks stored as exact zeros.
struct ReducedNetwork {
  Matrix S;
  Matrix G;
  Matrix L;
  Matrix Pi;
  Matrix H;
  Matrix F;
  ReducedOrders orders;
  Topology topology;
  std::vector<std::string> warnings;

  int nu() const { return static_cast<int>(S.rows()); }
};

struct ErrorRealization {
  Matrix Ae;
  Matrix Be;
  Matrix Ce;
  int n = 0;
  int nu = 0;
  // Pi of the reduced model when known. h2_norm then works in the
  // coordinates (x - Pi xr, xr), where a small error has small data.
  Matrix Pi;
};

struct GramianPair {
  Matrix W;
  Matrix M;

  Matrix W11(int n) const { return W.topLeftCorner(n, n); }
  Matrix W12(int n) const { return W.topRightCorner(n, W.cols() - n); }
  Matrix W22(int n) const { return W.bottomRightCorner(W.rows() - n, W.cols() - n); }
  Matrix M11(int n) const { return M.topLeftCorner(n, n); }
  Matrix M12(int n) const { return M.topRightCorner(n, M.cols() - n); }
  Matrix M22(int n) const { return M.bottomRightCorner(M.rows() - n, M.cols() - n); }
};

using BlockIndex = std::pair<int, int>;

/// Forbidden (i, j) subsystem blocks of S - GL.
std::vector<BlockIndex> forbidden_state_blocks(const Topology& topology);
/// Forbidden (i, j) blocks of G; empty without input_neighbors.
std::vector<BlockIndex> forbidden_input_blocks(const Topology& topology);

/// Blocks of F (reduced partition) that are not exactly zero although
/// forbidden.
std::vector<BlockIndex> structure_violations(const Matrix& F,
                                             const Topology& topology,
                                             const ReducedOrders& orders);
std::vector<BlockIndex> input_structure_violations(const Matrix& G,
                                                   const Topology& topology,
                                                   const ReducedOrders& orders);

/// Writes exact zeros into every forbidden block.
void zero_forbidden_blocks(Matrix& F, const Topology& topology,
                           const ReducedOrders& orders);
void zero_forbidden_input_blocks(Matrix& G, const Topology& topology,
                                 const ReducedOrders& orders);

/// Solution of A Pi + B L = Pi S. Appends a warning when Pi is rank
/// deficient.
Matrix compute_pi(const NetworkSystem& sys, const Matrix& S, const Matrix& L,
                  std::vector<std::string>* warnings = nullptr);

Matrix moments(const NetworkSystem& sys, const Matrix& S, const Matrix& L);

/// Relative tolerance used to separate rounding drift in S - GL from a real
/// structure violation.
inline constexpr double kStructureDriftTol = 1e-10;

ReducedNetwork build_reduced(const NetworkSystem& sys, const Matrix& S,
                             const Matrix& G, const Matrix& L,
                             const ReducedOrders& orders);

/// Same, with a precomputed Pi (must solve the Sylvester equation for S).
ReducedNetwork build_reduced(const NetworkSystem& sys, const Matrix& S,
                             const Matrix& G, const Matrix& L,
                             const ReducedOrders& orders, const Matrix& Pi);

ErrorRealization error_realization(const NetworkSystem& sys,
                                   const ReducedNetwork& red);
ErrorRealization error_realization(const NetworkSystem& sys, const Matrix& F,
                                   const Matrix& G, const Matrix& H);

GramianPair gramians(const ErrorRealization& err);

/// sqrt(tr(Be^T M Be)).
double h2_norm(const ErrorRealization& err);
/// sqrt(tr(Ce W Ce^T)).
double h2_norm_controllability(const ErrorRealization& err);
/// H2 norm of (A, B, C) itself.
double h2_norm(const Matrix& A, const Matrix& B, const Matrix& C);

inline constexpr double kPoleTol = 1e-12;

/// C (sI - A)^{-1} B.
ComplexMatrix transfer_eval(const Matrix& A, const Matrix& B, const Matrix& C,
                            Complex s);

/// Repeated transfer evaluations sharing one spectrum computation.
class TransferEvaluator {
 public:
  TransferEvaluator(Matrix A, Matrix B, Matrix C);
  ComplexMatrix operator()(Complex s) const;
  const linalg::Spectrum& poles() const { return poles_; }

 private:
  Matrix A_, B_, C_;
  linalg::Spectrum poles_;
};

/// Largest singular value of a complex matrix.
double largest_singular_value(const ComplexMatrix& K);

struct InterpolationPoint {
  Complex s;
  double residual = 0.0;
  double scale = 0.0;
  bool passed = false;
};

struct MomentReport {
  bool passed = false;
  bool algebraic = false;  // true when the HP = C Pi route was used
  double algebraic_residual = 0.0;
  std::vector<InterpolationPoint> points;
};

MomentReport verify_moment_matching(const NetworkSystem& sys,
                                    const ReducedNetwork& red,
                                    double tol = 1e-6);

struct ConstraintTolerances {
  double stability_margin = linalg::kDefaultStabilityMargin;
  double spectral_gap = linalg::kDefaultSpectralGap;
  double observability_tol = -1.0;
};

struct ConstraintReport {
  bool structure_ok = false;
  std::vector<BlockIndex> structure_violations;
  std::vector<BlockIndex> input_violations;
  bool stable = false;
  double max_real_part_F = 0.0;
  bool s_a_disjoint = false;
  double gap_s_a = 0.0;
  bool s_f_disjoint = false;
  double gap_s_f = 0.0;
  bool observable = false;
  int observability_rank = 0;
  int nu = 0;
  std::optional<double> h2_error;

  /// Problem constraints (iv).
  bool iv_passed() const { return s_a_disjoint && s_f_disjoint && observable; }
  /// Hard constraints: structure and stability.
  bool hard_passed() const { return structure_ok && stable; }
};

ConstraintReport check_problem_constraints(const NetworkSystem& sys,
                                           const ReducedNetwork& red,
                                           const ConstraintTolerances& tols = {});

}  // namespace netred
