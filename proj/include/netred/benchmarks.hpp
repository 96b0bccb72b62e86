#pragma once

// Benchmark networks: the 12th-order positive fixture, multi-area power
// networks and random positive networks, plus the H2-versus-N sweep.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "netred/network.hpp"
#include "netred/pipeline.hpp"

namespace netred::bench {

struct Fixture {
  NetworkSystem system;
  Matrix L;
  std::string sha256;
};

std::string default_fixture_path();
/// Loads and checksums the shipped fixture (kChecksum on mismatch).
Fixture fixture_positive_network(const std::string& path = default_fixture_path());
/// SHA-256 of the compact sorted-key dump of {"L", "system"}.
std::string fixture_checksum(const NetworkSystem& sys, const Matrix& L);

struct PowerAreaParams {
  double D = 0.0;
  double M = 0.0;
  double T_CH = 0.0;
  double R = 0.0;
  double T_G = 0.0;
  double T_tie = 0.0;  // link to the previous area; unused for area 0
};

struct PowerNetwork {
  NetworkSystem system;
  std::vector<PowerAreaParams> params;
  int redraws = 0;  // unstable draws discarded before this one
  std::vector<std::string> warnings;
};

inline constexpr int kMaxPowerDraws = 20;

/// Chain of N areas, 4N - 1 states. Area i >= 1 owns the tie-line state to
/// area i - 1. Inputs are the reference powers, outputs the frequencies.
PowerNetwork generate_power_network(int N, std::uint64_t seed);

/// A from the parameters without any stability check.
NetworkSystem assemble_power_network(const std::vector<PowerAreaParams>& params);

/// Entries uniform in (lo, hi), off-diagonal entries clamped to >= 0,
/// B and C uniform in (0, 1), forbidden blocks zeroed and the diagonal
/// shifted until A is Hurwitz.
NetworkSystem generate_random_positive(const Topology& topology, std::uint64_t seed,
                                       double lo = -5.0, double hi = 1.0);

/// Four subsystems of three states, one input and one output, coupled like
/// the fixture.
Topology fixture_topology();

struct SweepRow {
  int N = 0;
  bool ok = false;
  double h2_error = 0.0;
  double sdp_objective = 0.0;
  int grad_iterations = 0;
  double wall_seconds = 0.0;
  int redraws = 0;
  bool stable = false;
  bool chain_structured = false;
  std::string error;
};

/// Pipeline budget used per sweep point: one start, 400 gradient iterations.
PipelineConfig sweep_pipeline_defaults();

struct SweepConfig {
  int n_min = 4;
  int n_max = 30;
  std::uint64_t seed = 0;
  PipelineConfig pipeline = sweep_pipeline_defaults();
  int threads = 1;
};

/// One power network per N with L = I and unit orders. Failures are kept
/// as rows with ok = false. Rows come back ordered by N.
std::vector<SweepRow> sweep_h2_vs_N(const SweepConfig& config,
                                    const std::function<void(const SweepRow&)>& progress = {});

/// N,h2_error,sdp_objective,grad_iterations,wall_seconds
std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timing = true);

/// Thread count from NETRED_THREADS, capped at hardware concurrency.
int threads_from_env(int fallback = 1);

}  // namespace netred::bench
