#pragma once

// Smooth reformulation f(S, G) = tr(Be^T M(S, G) Be), its gradient and the
// projected-gradient method over structured stable pairs (S, G).

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "netred/network.hpp"

namespace netred::opt {

/// How the output matrix H = C Pi follows S.
enum class PiMode {
  kFixed,     // Pi held constant (H is data)
  kTracking,  // Pi = Pi(S) re-solved at every point; stays in the family
};

struct ObjectiveEval {
  double f = 0.0;
  Matrix M;      // observability Gramian of the error system
  Matrix W;      // controllability Gramian of the error system
  Matrix Pi;     // Pi used for H
  Matrix gradS;  // empty unless requested
  Matrix gradG;

  bool has_gradient() const { return gradS.size() > 0; }
};

/// Evaluates f and its gradient for one system and L. Holds the Schur form
/// of A so repeated evaluations only factor the nu x nu part.
class Objective {
 public:
  Objective(const NetworkSystem& sys, Matrix L, PiMode mode, Matrix Pi = {});

  /// Throws kUnstable when S - GL is not Hurwitz and kNoUniqueSolution when
  /// Pi(S) is undefined in tracking mode.
  ObjectiveEval evaluate(const Matrix& S, const Matrix& G, bool with_gradient) const;
  double value(const Matrix& S, const Matrix& G) const;

  /// Same as value but returns nothing instead of throwing.
  std::optional<double> try_value(const Matrix& S, const Matrix& G,
                                  double stability_margin) const;

  PiMode mode() const { return mode_; }
  const Matrix& L() const { return L_; }
  const Matrix& fixed_pi() const { return Pi_; }
  const NetworkSystem& system() const { return sys_; }

 private:
  Matrix pi_for(const Matrix& S) const;

  NetworkSystem sys_;
  Matrix L_;
  PiMode mode_;
  Matrix Pi_;
  linalg::SchurForm schurA_;
  linalg::SchurForm schurAt_;
};

/// f with Pi fixed.
ObjectiveEval objective(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                        const Matrix& L, const Matrix& Pi);
/// f and the gradient with Pi fixed.
ObjectiveEval gradient(const NetworkSystem& sys, const Matrix& S, const Matrix& G,
                       const Matrix& L, const Matrix& Pi);

struct GradientPair {
  Matrix S;
  Matrix G;
};

/// Central differences of f, entry by entry. The step shrinks (up to three
/// times) when a perturbed point leaves the stable set.
GradientPair finite_diff_gradient(const Objective& obj, const Matrix& S,
                                  const Matrix& G, double h);

/// Zeroes forbidden G blocks when apply_input_mask is set, then copies the
/// forbidden blocks of gradG * L into gradS so a step keeps (S - GL) fixed
/// there.
GradientPair project_gradient(const Matrix& gradS, const Matrix& gradG,
                              const Topology& topology, const ReducedOrders& orders,
                              const Matrix& L, bool apply_input_mask);

/// Makes (S - GL) exactly zero on forbidden blocks by overwriting S there
/// (and zeroes forbidden G blocks when masked).
void rezero(Matrix& S, Matrix& G, const Matrix& L, const Topology& topology,
            const ReducedOrders& orders, bool apply_input_mask);

/// Barzilai-Borwein trial step: s.s/s.y (long), s.y/y.y (short) or the two
/// taken in turn.
enum class BbRule { kLong, kShort, kAlternating };

struct OptimizerConfig {
  double epsilon = 1e-6;
  int max_iter = 5000;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double initial_step = 1.0;
  double stability_margin = 1e-9;
  int max_backtracks = 60;
  // Barzilai-Borwein trial step after the first iteration.
  bool bb_step = true;
  BbRule bb_rule = BbRule::kAlternating;
  double max_step = 1e6;
  bool input_mask = false;
  PiMode pi_mode = PiMode::kFixed;
  /// Called with every iterate, the start included.
  std::function<void(int, const Matrix&, const Matrix&)> on_iterate;
};

void validate(const OptimizerConfig& config);

struct LineSearchResult {
  bool accepted = false;
  double step = 0.0;
  double f = 0.0;
  int backtracks = 0;
  int unstable_rejections = 0;
  Matrix S;
  Matrix G;
};

/// Backtracking from trial_step along -direction. A candidate is accepted
/// when S - GL is Hurwitz with the configured margin and the Armijo
/// decrease f - c * step * |direction|^2 holds.
LineSearchResult line_search(const Objective& obj, const Matrix& S, const Matrix& G,
                             double f, const GradientPair& direction,
                             double trial_step, const OptimizerConfig& config,
                             const Topology& topology, const ReducedOrders& orders);

enum class Termination { kConverged, kMaxIterations, kStalled };

std::string to_string(Termination t);

struct OptimizerReport {
  int iterations = 0;
  std::vector<double> f_history;         // f at every iterate, starting with f0
  std::vector<double> gradmap_history;   // |projected gradient|_F per iterate
  std::vector<double> step_sizes;        // accepted steps
  std::vector<int> backtracks;           // halvings per iteration
  Matrix S;
  Matrix G;
  ObjectiveEval final_eval;
  Termination termination = Termination::kMaxIterations;
  std::string message;
  std::optional<ConstraintReport> constraints;
  // Smallest observed (f_k - f_{k+1}) / (step_k |gradmap_k|^2).
  double descent_constant = 0.0;
  double wall_seconds = 0.0;
};

/// Projected gradient descent from (S0, G0). The start must be structured
/// and stable; each accepted iterate is re-zeroed onto the structure.
OptimizerReport optimize(const NetworkSystem& sys, const Matrix& S0, const Matrix& G0,
                         const Matrix& L, const ReducedOrders& orders,
                         const Matrix& Pi, const OptimizerConfig& config = {});

/// Spectrum -1, ..., -nu on the diagonal and G = 0.
std::pair<Matrix, Matrix> fallback_start(int nu, int m);

}  // namespace netred::opt
