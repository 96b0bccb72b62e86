#pragma once

// Dense real kernels: real Schur form, Bartels-Stewart Sylvester/Lyapunov
// solvers, spectra and the stability / observability / spectral-gap tests
// every other module relies on.

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace netred {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

namespace linalg {

inline constexpr double kDefaultStabilityMargin = 1e-9;
inline constexpr double kDefaultSpectralGap = 1e-9;

/// A = Q T Q^T with Q orthogonal and T upper quasi-triangular (1x1 and 2x2
/// diagonal blocks).
struct SchurForm {
  Matrix Q;
  Matrix T;

  int dim() const { return static_cast<int>(T.rows()); }
};

struct Spectrum {
  std::vector<Complex> eigenvalues;
  double max_real_part = 0.0;
};

enum class LyapunovSide {
  kObservability,    // A^T X + X A + Q = 0
  kControllability,  // A X + X A^T + Q = 0
};

void require_square(const Matrix& A, const char* name);
void require_finite(const Matrix& A, const char* name);

SchurForm schur_decompose(const Matrix& A);

/// Schur form of A^T obtained from the Schur form of A by index reversal.
SchurForm transpose_schur(const SchurForm& schur);
SchurForm negate_schur(const SchurForm& schur);

/// Eigenvalues read off the diagonal blocks of a quasi-triangular factor.
Spectrum spectrum_from_schur(const SchurForm& schur);
Spectrum spectrum(const Matrix& A);

bool is_hurwitz(const Matrix& A, double margin = kDefaultStabilityMargin);

struct ClosestPair {
  Complex a;
  Complex s;
  double distance = 0.0;
};

ClosestPair closest_eigenvalue_pair(const Spectrum& a, const Spectrum& s);
bool spectra_disjoint(const Matrix& A, const Matrix& S,
                      double gap = kDefaultSpectralGap);

/// Numerical rank of [L; LS; ...; LS^{nu-1}]. A non-positive tol selects the
/// default dim * eps relative to the largest singular value.
int observability_rank(const Matrix& L, const Matrix& S, double tol = -1.0);

/// Solves A Pi + Q = Pi S. Throws kNoUniqueSolution when sigma(A) and
/// sigma(S) come within kDefaultSpectralGap of each other.
Matrix solve_sylvester(const Matrix& A, const Matrix& S, const Matrix& Q);

/// Same equation from precomputed Schur forms; no spectral precheck beyond
/// singular diagonal blocks.
Matrix solve_sylvester(const SchurForm& A, const SchurForm& S,
                       const Matrix& Q);

/// Lyapunov solution, symmetrized on return. Throws kUnstable if A is not
/// Hurwitz.
Matrix solve_lyapunov(const Matrix& A, const Matrix& Q, LyapunovSide side);
Matrix solve_lyapunov(const SchurForm& A, const Matrix& Q, LyapunovSide side);

double min_symmetric_eigenvalue(const Matrix& X);
double max_symmetric_eigenvalue(const Matrix& X);

}  // namespace linalg
}  // namespace netred
