#include "netred/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "netred/error.hpp"

namespace netred {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimension: return "dimension_mismatch";
    case ErrorCode::kNotConverged: return "not_converged";
    case ErrorCode::kNoUniqueSolution: return "no_unique_solution";
    case ErrorCode::kUnstable: return "unstable_matrix";
    case ErrorCode::kStructure: return "structure_violation";
    case ErrorCode::kPole: return "pole";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kStalled: return "stalled";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kSchema: return "schema_error";
    case ErrorCode::kChecksum: return "checksum_mismatch";
  }
  return "unknown";
}

namespace linalg {
namespace {

struct Block {
  int start;
  int size;
};

// Diagonal block partition of an upper quasi-triangular matrix.
std::vector<Block> diagonal_blocks(const Matrix& T) {
  std::vector<Block> blocks;
  const int n = static_cast<int>(T.rows());
  int i = 0;
  while (i < n) {
    if (i + 1 < n && T(i + 1, i) != 0.0) {
      blocks.push_back({i, 2});
      i += 2;
    } else {
      blocks.push_back({i, 1});
      i += 1;
    }
  }
  return blocks;
}

std::string format_complex(Complex z) {
  std::ostringstream os;
  os.precision(6);
  os << z.real();
  if (z.imag() != 0.0) os << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

// Solves TA Y - Y TS = R for upper quasi-triangular TA, TS.
Matrix quasi_triangular_sylvester(const Matrix& TA, const Matrix& TS,
                                  const Matrix& R) {
  const int n = static_cast<int>(TA.rows());
  const int nu = static_cast<int>(TS.rows());
  const auto row_blocks = diagonal_blocks(TA);
  const auto col_blocks = diagonal_blocks(TS);
  Matrix Y = Matrix::Zero(n, nu);
  for (const Block& cb : col_blocks) {
    const int j = cb.start;
    const int q = cb.size;
    Matrix C = R.middleCols(j, q);
    if (j > 0) C.noalias() += Y.leftCols(j) * TS.block(0, j, j, q);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2> TSjj = TS.block(j, j, q, q);
    for (auto it = row_blocks.rbegin(); it != row_blocks.rend(); ++it) {
      const int i = it->start;
      const int p = it->size;
      const int tail = n - i - p;
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2> rhs = C.block(i, 0, p, q);
      if (tail > 0) {
        rhs.noalias() -= TA.block(i, i + p, p, tail) * Y.block(i + p, j, tail, q);
      }
      if (p == 1 && q == 1) {
        const double d = TA(i, i) - TSjj(0, 0);
        if (d == 0.0) {
          throw Error(ErrorCode::kNoUniqueSolution,
                      "Sylvester equation has no unique solution: singular "
                      "diagonal block system");
        }
        Y(i, j) = rhs(0, 0) / d;
        continue;
      }
      // (I_q kron TAii - TSjj^T kron I_p) vec(Y) = vec(rhs)
      using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
      Small K = Small::Zero(p * q, p * q);
      for (int c = 0; c < q; ++c) {
        K.block(c * p, c * p, p, p) += TA.block(i, i, p, p);
        for (int r = 0; r < q; ++r) {
          K.block(c * p, r * p, p, p).diagonal().array() -= TSjj(r, c);
        }
      }
      Eigen::FullPivLU<Small> lu(K);
      if (!lu.isInvertible()) {
        throw Error(ErrorCode::kNoUniqueSolution,
                    "Sylvester equation has no unique solution: singular "
                    "diagonal block system");
      }
      Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1> v(p * q);
      for (int c = 0; c < q; ++c)
        for (int r = 0; r < p; ++r) v(c * p + r) = rhs(r, c);
      const Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1> sol = lu.solve(v);
      for (int c = 0; c < q; ++c)
        for (int r = 0; r < p; ++r) Y(i + r, j + c) = sol(c * p + r);
    }
  }
  return Y;
}

double residual_scale(const Matrix& Q) {
  return std::max(1.0, Q.norm());
}

}  // namespace

void require_square(const Matrix& A, const char* name) {
  if (A.rows() != A.cols() || A.rows() == 0) {
    std::ostringstream os;
    os << name << " must be square and non-empty, got " << A.rows() << "x"
       << A.cols();
    throw Error(ErrorCode::kDimension, os.str());
  }
}

void require_finite(const Matrix& A, const char* name) {
  if (!A.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " has non-finite entries");
  }
}

SchurForm schur_decompose(const Matrix& A) {
  require_square(A, "A");
  require_finite(A, "A");
  Eigen::RealSchur<Matrix> rs(A.rows());
  rs.compute(A, /*computeU=*/true);
  if (rs.info() != Eigen::Success) {
    std::ostringstream os;
    os << "real Schur iteration did not converge within "
       << rs.getMaxIterations() << " iterations (dim " << A.rows() << ")";
    throw Error(ErrorCode::kNotConverged, os.str());
  }
  return {rs.matrixU(), rs.matrixT()};
}

SchurForm transpose_schur(const SchurForm& schur) {
  // A^T = (Q J)(J T^T J)(Q J)^T with J the reversal permutation.
  const int n = schur.dim();
  SchurForm out{Matrix(n, n), Matrix(n, n)};
  for (int j = 0; j < n; ++j) out.Q.col(j) = schur.Q.col(n - 1 - j);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out.T(i, j) = schur.T(n - 1 - j, n - 1 - i);
  }
  return out;
}

SchurForm negate_schur(const SchurForm& schur) {
  return {schur.Q, -schur.T};
}

Spectrum spectrum_from_schur(const SchurForm& schur) {
  const Matrix& T = schur.T;
  Spectrum out;
  out.eigenvalues.reserve(T.rows());
  for (const Block& b : diagonal_blocks(T)) {
    if (b.size == 1) {
      out.eigenvalues.emplace_back(T(b.start, b.start), 0.0);
      continue;
    }
    const double a = T(b.start, b.start);
    const double bb = T(b.start, b.start + 1);
    const double c = T(b.start + 1, b.start);
    const double d = T(b.start + 1, b.start + 1);
    const double mid = 0.5 * (a + d);
    const double disc = 0.25 * (a - d) * (a - d) + bb * c;
    if (disc < 0.0) {
      const double im = std::sqrt(-disc);
      out.eigenvalues.emplace_back(mid, im);
      out.eigenvalues.emplace_back(mid, -im);
    } else {
      const double re = std::sqrt(disc);
      out.eigenvalues.emplace_back(mid + re, 0.0);
      out.eigenvalues.emplace_back(mid - re, 0.0);
    }
  }
  out.max_real_part = -std::numeric_limits<double>::infinity();
  for (const Complex& z : out.eigenvalues) {
    out.max_real_part = std::max(out.max_real_part, z.real());
  }
  return out;
}

Spectrum spectrum(const Matrix& A) {
  return spectrum_from_schur(schur_decompose(A));
}

bool is_hurwitz(const Matrix& A, double margin) {
  require_square(A, "A");
  if (!A.allFinite()) return false;
  return spectrum(A).max_real_part < -margin;
}

ClosestPair closest_eigenvalue_pair(const Spectrum& a, const Spectrum& s) {
  ClosestPair best{{}, {}, std::numeric_limits<double>::infinity()};
  for (const Complex& x : a.eigenvalues) {
    for (const Complex& y : s.eigenvalues) {
      const double d = std::abs(x - y);
      if (d < best.distance) best = {x, y, d};
    }
  }
  return best;
}

bool spectra_disjoint(const Matrix& A, const Matrix& S, double gap) {
  require_square(A, "A");
  require_square(S, "S");
  return closest_eigenvalue_pair(spectrum(A), spectrum(S)).distance > gap;
}

int observability_rank(const Matrix& L, const Matrix& S, double tol) {
  require_square(S, "S");
  const int nu = static_cast<int>(S.rows());
  if (L.cols() != nu) {
    throw Error(ErrorCode::kDimension, "L must have as many columns as S");
  }
  const int m = static_cast<int>(L.rows());
  Matrix O(m * nu, nu);
  Matrix block = L;
  for (int k = 0; k < nu; ++k) {
    O.middleRows(k * m, m) = block;
    block = block * S;
  }
  Eigen::JacobiSVD<Matrix> svd(O);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double rel =
      tol > 0.0 ? tol
                : std::max(O.rows(), O.cols()) *
                      std::numeric_limits<double>::epsilon();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel * sv(0)) ++rank;
  }
  return rank;
}

Matrix solve_sylvester(const SchurForm& A, const SchurForm& S,
                       const Matrix& Q) {
  if (Q.rows() != A.dim() || Q.cols() != S.dim()) {
    throw Error(ErrorCode::kDimension, "Sylvester data has wrong shape");
  }
  // A Pi - Pi S = -Q
  const Matrix R = -(A.Q.transpose() * Q * S.Q);
  Matrix Pi = A.Q * quasi_triangular_sylvester(A.T, S.T, R) * S.Q.transpose();
  // One step of iterative refinement on the defining residual.
  const Matrix Afull = A.Q * A.T * A.Q.transpose();
  const Matrix Sfull = S.Q * S.T * S.Q.transpose();
  const Matrix res = Afull * Pi + Q - Pi * Sfull;
  if (res.norm() > 1e-13 * residual_scale(Q)) {
    const Matrix Rc = -(A.Q.transpose() * res * S.Q);
    Pi += A.Q * quasi_triangular_sylvester(A.T, S.T, Rc) * S.Q.transpose();
  }
  return Pi;
}

Matrix solve_sylvester(const Matrix& A, const Matrix& S, const Matrix& Q) {
  require_square(A, "A");
  require_square(S, "S");
  require_finite(Q, "Q");
  const SchurForm sa = schur_decompose(A);
  const SchurForm ss = schur_decompose(S);
  const ClosestPair pair =
      closest_eigenvalue_pair(spectrum_from_schur(sa), spectrum_from_schur(ss));
  if (pair.distance <= kDefaultSpectralGap) {
    throw Error(ErrorCode::kNoUniqueSolution,
                "Sylvester equation has no unique solution: eigenvalue " +
                    format_complex(pair.a) + " of A is within the spectral "
                    "gap of eigenvalue " + format_complex(pair.s) + " of S");
  }
  return solve_sylvester(sa, ss, Q);
}

Matrix solve_lyapunov(const SchurForm& A, const Matrix& Q, LyapunovSide side) {
  const SchurForm At = transpose_schur(A);
  Matrix X = side == LyapunovSide::kObservability
                 ? solve_sylvester(At, negate_schur(A), Q)
                 : solve_sylvester(A, negate_schur(At), Q);
  return 0.5 * (X + X.transpose());
}

Matrix solve_lyapunov(const Matrix& A, const Matrix& Q, LyapunovSide side) {
  require_square(A, "A");
  require_finite(Q, "Q");
  if (Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw Error(ErrorCode::kDimension, "Lyapunov data has wrong shape");
  }
  const SchurForm sa = schur_decompose(A);
  const Spectrum sp = spectrum_from_schur(sa);
  if (!(sp.max_real_part < -kDefaultStabilityMargin)) {
    std::ostringstream os;
    os << "unstable matrix: max real part of spectrum is " << sp.max_real_part;
    throw Error(ErrorCode::kUnstable, os.str());
  }
  return solve_lyapunov(sa, Q, side);
}

double min_symmetric_eigenvalue(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (X + X.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_symmetric_eigenvalue(const Matrix& X) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (X + X.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues()(X.rows() - 1);
}

}  // namespace linalg
}  // namespace netred
