#include "netred/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "netred/error.hpp"

namespace netred {
namespace {

std::string block_name(const BlockIndex& b) {
  std::ostringstream os;
  os << "(" << b.first << "," << b.second << ")";
  return os.str();
}

void require_shape(const Matrix& M, Eigen::Index r, Eigen::Index c,
                   const char* name) {
  if (M.rows() != r || M.cols() != c) {
    std::ostringstream os;
    os << name << " must be " << r << "x" << c << ", got " << M.rows() << "x"
       << M.cols();
    throw Error(ErrorCode::kDimension, os.str());
  }
}

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void check_index_sets(const IndexSets& sets, int N, const char* name) {
  if (static_cast<int>(sets.size()) != N) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " must have one entry per subsystem");
  }
  for (const auto& s : sets) {
    for (int j : s) {
      if (j < 0 || j >= N) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(name) + " index " + std::to_string(j) +
                        " out of range");
      }
    }
  }
}

double max_abs_block(const Matrix& M, int r0, int rn, int c0, int cn) {
  if (rn == 0 || cn == 0) return 0.0;
  return M.block(r0, c0, rn, cn).cwiseAbs().maxCoeff();
}

}  // namespace

std::vector<int> input_partition(const Topology& t) {
  if (!t.input_sizes.empty()) return t.input_sizes;
  return std::vector<int>(t.N, 1);
}

std::vector<int> block_offsets(const std::vector<int>& sizes) {
  std::vector<int> off(sizes.size() + 1, 0);
  std::partial_sum(sizes.begin(), sizes.end(), off.begin() + 1);
  return off;
}

int Topology::n() const { return std::accumulate(sizes.begin(), sizes.end(), 0); }

bool Topology::state_coupled(int i, int j) const {
  return contains(state_neighbors.at(i), j);
}

bool Topology::input_coupled(int i, int j) const {
  if (!input_neighbors) return true;
  return contains(input_neighbors->at(i), j);
}

void Topology::validate() const {
  if (N < 1) throw Error(ErrorCode::kInvalidArgument, "topology needs N >= 1");
  if (static_cast<int>(sizes.size()) != N) {
    throw Error(ErrorCode::kInvalidArgument, "sizes must have N entries");
  }
  for (int s : sizes) {
    if (s < 1) throw Error(ErrorCode::kInvalidArgument, "subsystem sizes must be positive");
  }
  if (m < 1 || p < 1) throw Error(ErrorCode::kInvalidArgument, "m and p must be positive");
  check_index_sets(state_neighbors, N, "state_neighbors");
  for (int i = 0; i < N; ++i) {
    if (!contains(state_neighbors[i], i)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "state_neighbors[" + std::to_string(i) + "] must contain " +
                      std::to_string(i));
    }
  }
  if (input_neighbors) {
    check_index_sets(*input_neighbors, N, "input_neighbors");
    const std::vector<int> part = input_partition(*this);
    if (static_cast<int>(part.size()) != N ||
        std::accumulate(part.begin(), part.end(), 0) != m ||
        std::any_of(part.begin(), part.end(), [](int k) { return k < 0; })) {
      throw Error(ErrorCode::kInvalidArgument,
                  "input_sizes must have N nonnegative entries summing to m");
    }
  }
}

Topology Topology::full(std::vector<int> sizes, int m, int p) {
  Topology t;
  t.N = static_cast<int>(sizes.size());
  t.sizes = std::move(sizes);
  t.m = m;
  t.p = p;
  std::vector<int> all(t.N);
  std::iota(all.begin(), all.end(), 0);
  t.state_neighbors.assign(t.N, all);
  return t;
}

std::vector<BlockIndex> forbidden_state_blocks(const Topology& topology) {
  std::vector<BlockIndex> out;
  for (int i = 0; i < topology.N; ++i)
    for (int j = 0; j < topology.N; ++j)
      if (!topology.state_coupled(i, j)) out.emplace_back(i, j);
  return out;
}

std::vector<BlockIndex> forbidden_input_blocks(const Topology& topology) {
  std::vector<BlockIndex> out;
  if (!topology.input_neighbors) return out;
  for (int i = 0; i < topology.N; ++i)
    for (int j = 0; j < topology.N; ++j)
      if (!topology.input_coupled(i, j)) out.emplace_back(i, j);
  return out;
}

void validate_system(const NetworkSystem& sys) {
  const Topology& t = sys.topology;
  t.validate();
  const int n = t.n();
  require_shape(sys.A, n, n, "A");
  require_shape(sys.B, n, t.m, "B");
  require_shape(sys.C, t.p, n, "C");
  linalg::require_finite(sys.A, "A");
  linalg::require_finite(sys.B, "B");
  linalg::require_finite(sys.C, "C");
  const auto off = block_offsets(t.sizes);
  for (const BlockIndex& b : forbidden_state_blocks(t)) {
    if (max_abs_block(sys.A, off[b.first], t.sizes[b.first], off[b.second],
                      t.sizes[b.second]) != 0.0) {
      throw Error(ErrorCode::kStructure,
                  "A has a nonzero forbidden block " + block_name(b));
    }
  }
  if (t.input_neighbors) {
    const auto part = input_partition(t);
    const auto ioff = block_offsets(part);
    for (const BlockIndex& b : forbidden_input_blocks(t)) {
      if (max_abs_block(sys.B, off[b.first], t.sizes[b.first], ioff[b.second],
                        part[b.second]) != 0.0) {
        throw Error(ErrorCode::kStructure,
                    "B has a nonzero forbidden block " + block_name(b));
      }
    }
  }
  const double mr = linalg::spectrum(sys.A).max_real_part;
  if (!(mr < -linalg::kDefaultStabilityMargin)) {
    std::ostringstream os;
    os << "unstable matrix A: max real part of spectrum is " << mr;
    throw Error(ErrorCode::kUnstable, os.str());
  }
}

int ReducedOrders::total() const {
  return std::accumulate(orders.begin(), orders.end(), 0);
}

void ReducedOrders::validate(const Topology& topology) const {
  if (static_cast<int>(orders.size()) != topology.N) {
    throw Error(ErrorCode::kInvalidArgument,
                "orders must have one entry per subsystem (" +
                    std::to_string(topology.N) + ")");
  }
  for (int i = 0; i < topology.N; ++i) {
    if (orders[i] < 1 || orders[i] > topology.sizes[i]) {
      throw Error(ErrorCode::kInvalidArgument,
                  "order of subsystem " + std::to_string(i) +
                      " must lie in [1, " + std::to_string(topology.sizes[i]) +
                      "]");
    }
  }
}

std::vector<BlockIndex> structure_violations(const Matrix& F,
                                             const Topology& topology,
                                             const ReducedOrders& orders) {
  const auto off = block_offsets(orders.orders);
  std::vector<BlockIndex> out;
  for (const BlockIndex& b : forbidden_state_blocks(topology)) {
    if (max_abs_block(F, off[b.first], orders.orders[b.first], off[b.second],
                      orders.orders[b.second]) != 0.0) {
      out.push_back(b);
    }
  }
  return out;
}

std::vector<BlockIndex> input_structure_violations(const Matrix& G,
                                                   const Topology& topology,
                                                   const ReducedOrders& orders) {
  std::vector<BlockIndex> out;
  if (!topology.input_neighbors) return out;
  const auto off = block_offsets(orders.orders);
  const auto part = input_partition(topology);
  const auto ioff = block_offsets(part);
  for (const BlockIndex& b : forbidden_input_blocks(topology)) {
    if (max_abs_block(G, off[b.first], orders.orders[b.first], ioff[b.second],
                      part[b.second]) != 0.0) {
      out.push_back(b);
    }
  }
  return out;
}

void zero_forbidden_blocks(Matrix& F, const Topology& topology,
                           const ReducedOrders& orders) {
  const auto off = block_offsets(orders.orders);
  for (const BlockIndex& b : forbidden_state_blocks(topology)) {
    F.block(off[b.first], off[b.second], orders.orders[b.first],
            orders.orders[b.second])
        .setZero();
  }
}

void zero_forbidden_input_blocks(Matrix& G, const Topology& topology,
                                 const ReducedOrders& orders) {
  if (!topology.input_neighbors) return;
  const auto off = block_offsets(orders.orders);
  const auto part = input_partition(topology);
  const auto ioff = block_offsets(part);
  for (const BlockIndex& b : forbidden_input_blocks(topology)) {
    G.block(off[b.first], ioff[b.second], orders.orders[b.first],
            part[b.second])
        .setZero();
  }
}

Matrix compute_pi(const NetworkSystem& sys, const Matrix& S, const Matrix& L,
                  std::vector<std::string>* warnings) {
  linalg::require_square(S, "S");
  require_shape(L, sys.m(), S.rows(), "L");
  const Matrix Pi = linalg::solve_sylvester(sys.A, S, sys.B * L);
  if (warnings) {
    Eigen::JacobiSVD<Matrix> svd(Pi);
    const Vector& sv = svd.singularValues();
    const double tol = std::max(Pi.rows(), Pi.cols()) *
                       std::numeric_limits<double>::epsilon() *
                       (sv.size() ? sv(0) : 0.0);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > tol) ++rank;
    if (rank < S.rows()) {
      warnings->push_back("Pi is rank deficient (rank " + std::to_string(rank) +
                          " < " + std::to_string(S.rows()) + ")");
    }
  }
  return Pi;
}

Matrix moments(const NetworkSystem& sys, const Matrix& S, const Matrix& L) {
  return sys.C * compute_pi(sys, S, L);
}

namespace {

ReducedNetwork assemble_reduced(const NetworkSystem& sys, const Matrix& S,
                                const Matrix& G, const Matrix& L,
                                const ReducedOrders& orders,
                                const Matrix* Pi_in) {
  orders.validate(sys.topology);
  const int nu = orders.total();
  require_shape(S, nu, nu, "S");
  require_shape(G, nu, sys.m(), "G");
  require_shape(L, sys.m(), nu, "L");
  linalg::require_finite(S, "S");
  linalg::require_finite(G, "G");
  linalg::require_finite(L, "L");

  ReducedNetwork red;
  red.S = S;
  red.G = G;
  red.L = L;
  red.orders = orders;
  red.topology = sys.topology;

  const double scale = std::max(1.0, S.norm() + G.norm() * L.norm());
  red.F = S - G * L;
  const auto off = block_offsets(orders.orders);
  for (const BlockIndex& b : forbidden_state_blocks(sys.topology)) {
    const double v = max_abs_block(red.F, off[b.first], orders.orders[b.first],
                                   off[b.second], orders.orders[b.second]);
    if (v > kStructureDriftTol * scale) {
      std::ostringstream os;
      os << "structure violation: block " << block_name(b)
         << " of S - GL is forbidden but has max |entry| " << v;
      throw Error(ErrorCode::kStructure, os.str());
    }
  }
  zero_forbidden_blocks(red.F, sys.topology, orders);
  const auto gviol = input_structure_violations(G, sys.topology, orders);
  if (!gviol.empty()) {
    throw Error(ErrorCode::kStructure,
                "structure violation: block " + block_name(gviol.front()) +
                    " of G is forbidden by input_neighbors");
  }

  const linalg::Spectrum spF = linalg::spectrum(red.F);
  if (!(spF.max_real_part < -linalg::kDefaultStabilityMargin)) {
    std::ostringstream os;
    os << "unstable reduced model: max real part of spectrum of S - GL is "
       << spF.max_real_part;
    throw Error(ErrorCode::kUnstable, os.str());
  }

  if (Pi_in) {
    require_shape(*Pi_in, sys.n(), nu, "Pi");
    red.Pi = *Pi_in;
  } else {
    red.Pi = compute_pi(sys, S, L, &red.warnings);
  }
  red.H = sys.C * red.Pi;

  const linalg::ClosestPair cp =
      linalg::closest_eigenvalue_pair(linalg::spectrum(S), spF);
  if (cp.distance <= linalg::kDefaultSpectralGap) {
    std::ostringstream os;
    os << "sigma(S) and sigma(S - GL) are within " << cp.distance
       << " of each other";
    red.warnings.push_back(os.str());
  }
  return red;
}

}  // namespace

ReducedNetwork build_reduced(const NetworkSystem& sys, const Matrix& S,
                             const Matrix& G, const Matrix& L,
                             const ReducedOrders& orders) {
  return assemble_reduced(sys, S, G, L, orders, nullptr);
}

ReducedNetwork build_reduced(const NetworkSystem& sys, const Matrix& S,
                             const Matrix& G, const Matrix& L,
                             const ReducedOrders& orders, const Matrix& Pi) {
  return assemble_reduced(sys, S, G, L, orders, &Pi);
}

ErrorRealization error_realization(const NetworkSystem& sys, const Matrix& F,
                                   const Matrix& G, const Matrix& H) {
  const int n = sys.n();
  const int nu = static_cast<int>(F.rows());
  linalg::require_square(F, "F");
  require_shape(G, nu, sys.m(), "G");
  require_shape(H, sys.p(), nu, "H");
  for (const auto& [M, name] : {std::pair{&sys.A, "A"}, std::pair{&F, "S - GL"}}) {
    const double mr = linalg::spectrum(*M).max_real_part;
    if (!(mr < -linalg::kDefaultStabilityMargin)) {
      std::ostringstream os;
      os << "unstable matrix " << name << ": max real part of spectrum is " << mr;
      throw Error(ErrorCode::kUnstable, os.str());
    }
  }
  ErrorRealization e;
  e.n = n;
  e.nu = nu;
  e.Ae = Matrix::Zero(n + nu, n + nu);
  e.Ae.topLeftCorner(n, n) = sys.A;
  e.Ae.bottomRightCorner(nu, nu) = F;
  e.Be.resize(n + nu, sys.m());
  e.Be << sys.B, G;
  e.Ce.resize(sys.p(), n + nu);
  e.Ce << sys.C, -H;
  return e;
}

ErrorRealization error_realization(const NetworkSystem& sys,
                                   const ReducedNetwork& red) {
  ErrorRealization e = error_realization(sys, red.F, red.G, red.H);
  if (red.Pi.rows() == sys.n() && red.Pi.cols() == red.nu()) e.Pi = red.Pi;
  return e;
}

GramianPair gramians(const ErrorRealization& err) {
  const linalg::SchurForm sa = linalg::schur_decompose(err.Ae);
  const double mr = linalg::spectrum_from_schur(sa).max_real_part;
  if (!(mr < -linalg::kDefaultStabilityMargin)) {
    std::ostringstream os;
    os << "unstable error system: max real part of spectrum is " << mr;
    throw Error(ErrorCode::kUnstable, os.str());
  }
  GramianPair g;
  g.W = linalg::solve_lyapunov(sa, err.Be * err.Be.transpose(),
                               linalg::LyapunovSide::kControllability);
  g.M = linalg::solve_lyapunov(sa, err.Ce.transpose() * err.Ce,
                               linalg::LyapunovSide::kObservability);
  return g;
}

namespace {

Matrix lyap_or_undefined(const Matrix& A, const Matrix& Q,
                         linalg::LyapunovSide side) {
  try {
    return linalg::solve_lyapunov(A, Q, side);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnstable) {
      throw Error(ErrorCode::kUnstable,
                  std::string("H2 norm undefined for unstable system: ") + e.what());
    }
    throw;
  }
}

}  // namespace

double h2_norm(const ErrorRealization& err) {
  if (err.Pi.size() > 0) {
    const int n = err.n, nu = err.nu;
    const Matrix A = err.Ae.topLeftCorner(n, n);
    const Matrix F = err.Ae.bottomRightCorner(nu, nu);
    ErrorRealization t = err;
    t.Pi.resize(0, 0);
    t.Ae.topRightCorner(n, nu) = A * err.Pi - err.Pi * F;
    t.Be.topRows(n) = err.Be.topRows(n) - err.Pi * err.Be.bottomRows(nu);
    t.Ce.rightCols(nu) = err.Ce.leftCols(n) * err.Pi + err.Ce.rightCols(nu);
    return h2_norm(t);
  }
  const Matrix M = lyap_or_undefined(err.Ae, err.Ce.transpose() * err.Ce,
                                     linalg::LyapunovSide::kObservability);
  return std::sqrt(std::max(0.0, (err.Be.transpose() * M * err.Be).trace()));
}

double h2_norm_controllability(const ErrorRealization& err) {
  const Matrix W = lyap_or_undefined(err.Ae, err.Be * err.Be.transpose(),
                                     linalg::LyapunovSide::kControllability);
  return std::sqrt(std::max(0.0, (err.Ce * W * err.Ce.transpose()).trace()));
}

double h2_norm(const Matrix& A, const Matrix& B, const Matrix& C) {
  const Matrix M = lyap_or_undefined(A, C.transpose() * C,
                                     linalg::LyapunovSide::kObservability);
  return std::sqrt(std::max(0.0, (B.transpose() * M * B).trace()));
}

namespace {

ComplexMatrix evaluate_at(const Matrix& A, const Matrix& B, const Matrix& C,
                          const linalg::Spectrum& poles, Complex s) {
  for (const Complex& z : poles.eigenvalues) {
    if (std::abs(s - z) <= kPoleTol) {
      std::ostringstream os;
      os << "transfer function evaluated at a pole: s = " << s.real()
         << (s.imag() < 0 ? "-" : "+") << std::abs(s.imag()) << "i";
      throw Error(ErrorCode::kPole, os.str());
    }
  }
  ComplexMatrix M = -A.cast<Complex>();
  M.diagonal().array() += s;
  const ComplexMatrix X = M.partialPivLu().solve(B.cast<Complex>());
  return C.cast<Complex>() * X;
}

}  // namespace

ComplexMatrix transfer_eval(const Matrix& A, const Matrix& B, const Matrix& C,
                            Complex s) {
  linalg::require_square(A, "A");
  require_shape(B, A.rows(), B.cols(), "B");
  require_shape(C, C.rows(), A.rows(), "C");
  return evaluate_at(A, B, C, linalg::spectrum(A), s);
}

TransferEvaluator::TransferEvaluator(Matrix A, Matrix B, Matrix C)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)),
      poles_(linalg::spectrum(A_)) {}

ComplexMatrix TransferEvaluator::operator()(Complex s) const {
  return evaluate_at(A_, B_, C_, poles_, s);
}

double largest_singular_value(const ComplexMatrix& K) {
  if (K.size() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(K);
  return svd.singularValues()(0);
}

MomentReport verify_moment_matching(const NetworkSystem& sys,
                                    const ReducedNetwork& red, double tol) {
  MomentReport rep;
  const int nu = red.nu();
  std::vector<Complex> pts;
  std::vector<ComplexVector> dirs;

  const bool diagonal = (red.S - Matrix(red.S.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal) {
    for (int i = 0; i < nu; ++i) {
      pts.emplace_back(red.S(i, i), 0.0);
      dirs.push_back(red.L.col(i).cast<Complex>());
    }
  } else {
    Eigen::EigenSolver<Matrix> es(red.S);
    bool usable = es.info() == Eigen::Success;
    if (usable) {
      const ComplexMatrix V = es.eigenvectors();
      Eigen::JacobiSVD<ComplexMatrix> svd(V);
      const Vector& sv = svd.singularValues();
      usable = sv(nu - 1) > 0.0 && sv(0) / sv(nu - 1) < 1e8;
      if (usable) {
        for (int i = 0; i < nu; ++i) {
          pts.push_back(es.eigenvalues()(i));
          dirs.push_back(red.L.cast<Complex>() * V.col(i).normalized());
        }
      }
    }
    if (!usable) {
      rep.algebraic = true;
      const Matrix Pi = compute_pi(sys, red.S, red.L);
      const double h = (red.H - sys.C * Pi).norm() / std::max(1.0, red.H.norm());
      const double syl = (sys.A * red.Pi + sys.B * red.L - red.Pi * red.S).norm() /
                         std::max(1.0, (sys.B * red.L).norm());
      rep.algebraic_residual = std::max(h, syl);
      rep.passed = rep.algebraic_residual <= tol;
      return rep;
    }
  }

  const TransferEvaluator full(sys.A, sys.B, sys.C);
  const TransferEvaluator reduced(red.F, red.G, red.H);
  rep.passed = true;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    InterpolationPoint ip;
    ip.s = pts[k];
    if (dirs[k].norm() == 0.0) {
      // No moment is prescribed along a zero direction.
      ip.scale = 1.0;
      ip.passed = true;
      rep.points.push_back(ip);
      continue;
    }
    try {
      const ComplexVector a = full(pts[k]) * dirs[k];
      const ComplexVector b = reduced(pts[k]) * dirs[k];
      ip.residual = (a - b).norm();
      ip.scale = std::max(1.0, a.norm());
      ip.passed = std::isfinite(ip.residual) && ip.residual <= tol * ip.scale;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kPole) throw;
      ip.residual = std::numeric_limits<double>::infinity();
      ip.scale = 1.0;
      ip.passed = false;
    }
    rep.passed = rep.passed && ip.passed;
    rep.points.push_back(ip);
  }
  return rep;
}

ConstraintReport check_problem_constraints(const NetworkSystem& sys,
                                           const ReducedNetwork& red,
                                           const ConstraintTolerances& tols) {
  ConstraintReport r;
  r.nu = red.nu();
  const double scale =
      std::max(1.0, red.S.norm() + red.G.norm() * red.L.norm());
  const Matrix Fraw = red.S - red.G * red.L;
  const auto off = block_offsets(red.orders.orders);
  for (const BlockIndex& b : forbidden_state_blocks(red.topology)) {
    const int i0 = off[b.first], j0 = off[b.second];
    const int ni = red.orders.orders[b.first], nj = red.orders.orders[b.second];
    if (max_abs_block(red.F, i0, ni, j0, nj) != 0.0 ||
        max_abs_block(Fraw, i0, ni, j0, nj) > kStructureDriftTol * scale) {
      r.structure_violations.push_back(b);
    }
  }
  r.input_violations = input_structure_violations(red.G, red.topology, red.orders);
  r.structure_ok = r.structure_violations.empty() && r.input_violations.empty();

  const linalg::Spectrum spF = linalg::spectrum(red.F);
  const linalg::Spectrum spS = linalg::spectrum(red.S);
  const linalg::Spectrum spA = linalg::spectrum(sys.A);
  r.max_real_part_F = spF.max_real_part;
  r.stable = spF.max_real_part < -tols.stability_margin;
  r.gap_s_a = linalg::closest_eigenvalue_pair(spS, spA).distance;
  r.s_a_disjoint = r.gap_s_a > tols.spectral_gap;
  r.gap_s_f = linalg::closest_eigenvalue_pair(spS, spF).distance;
  r.s_f_disjoint = r.gap_s_f > tols.spectral_gap;
  r.observability_rank = linalg::observability_rank(red.L, red.S, tols.observability_tol);
  r.observable = r.observability_rank == r.nu;
  if (r.stable) {
    try {
      r.h2_error = h2_norm(error_realization(sys, red));
    } catch (const Error&) {
      r.h2_error.reset();
    }
  }
  return r;
}

}  // namespace netred
