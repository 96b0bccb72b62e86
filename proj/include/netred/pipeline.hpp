#pragma once

// End-to-end reduction: convex relaxation, gradient refinement, or both.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "netred/optimizer.hpp"
#include "netred/relaxation.hpp"

namespace netred {

enum class Method { kSdp, kGrad, kSdpGrad };

std::string to_string(Method m);
/// Accepts "sdp", "grad", "sdp+grad".
Method parse_method(const std::string& s);

struct PipelineConfig {
  Method method = Method::kSdpGrad;
  Matrix s_grid;  // empty selects diag(1, ..., nu)
  sdp::SdpOptions sdp;
  SdpFormulation formulation = SdpFormulation::kAuto;
  double scale_bound = kDefaultScaleBound;
  opt::OptimizerConfig optimizer = tracking_defaults();
  // Relative size of the random symmetry-breaking perturbation applied to
  // each gradient start.
  double perturbation = 0.01;
  // Every start is screened with a short run; the best screened starts are
  // then rerun with the full iteration budget until one converges.
  int starts = 32;
  int screen_iter = 300;
  int continue_starts = 3;
  std::uint64_t seed = 0;

  static opt::OptimizerConfig tracking_defaults() {
    opt::OptimizerConfig c;
    c.pi_mode = opt::PiMode::kTracking;
    return c;
  }
};

struct SdpStage {
  sdp::SdpStatus status = sdp::SdpStatus::kMaxIterations;
  double objective = 0.0;
  double duality_gap = 0.0;
  double primal_residual = 0.0;
  int iterations = 0;
  int num_vars = 0;
  bool audit_passed = false;
  bool ridge_applied = false;
  bool recovered = false;
  double recovered_h2 = 0.0;
  std::string message;
  std::optional<ReducedNetwork> model;
};

struct GradStage {
  opt::OptimizerReport report;
  int starts_run = 0;
  int best_start = 0;
  std::vector<double> start_h2;  // H2 error after screening, NaN if rejected
  std::vector<int> continued;    // starts rerun with the full budget
  bool from_sdp = false;
};

struct PipelineResult {
  ReducedNetwork model;
  double h2_error = 0.0;
  std::optional<SdpStage> sdp;
  std::optional<GradStage> grad;
  ConstraintReport constraints;
  MomentReport moments;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

/// Starting point for the gradient stage when no relaxation is used:
/// spectrum -1, ..., -nu, scaled away from sigma(A) if needed.
std::pair<Matrix, Matrix> safe_fallback_start(const NetworkSystem& sys, int nu);

/// Random perturbation of (S, G) on the free entries, keeping structure and
/// stability. Deterministic in seed.
std::pair<Matrix, Matrix> perturb_start(const NetworkSystem& sys, const Matrix& S,
                                        const Matrix& G, const Matrix& L,
                                        const ReducedOrders& orders, double relative,
                                        std::uint64_t seed, bool input_mask);

/// L = [0 ... 0 1] in every row (m x nu).
Matrix canonical_last_L(int m, int nu);

PipelineResult reduce(const NetworkSystem& sys, const Matrix& L,
                      const ReducedOrders& orders, const PipelineConfig& config = {});

}  // namespace netred
