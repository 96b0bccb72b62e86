#include "netred/benchmarks.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "netred/error.hpp"
#include "netred/io.hpp"

#ifndef NETRED_DATA_DIR
#define NETRED_DATA_DIR "data"
#endif

namespace netred::bench {

std::string default_fixture_path() {
  const char* dir = std::getenv("NETRED_DATA_DIR");
  return std::string(dir && *dir ? dir : NETRED_DATA_DIR) + "/fixture_positive_network.json";
}

std::string fixture_checksum(const NetworkSystem& sys, const Matrix& L) {
  io::Json j;
  j["L"] = io::matrix_to_json(L);
  j["system"] = io::system_to_json(sys);
  return io::sha256_hex(j.dump());
}

Fixture fixture_positive_network(const std::string& path) {
  const io::Json j = io::parse_json(io::read_file(path), path);
  if (!j.is_object() || !j.contains("system") || !j.contains("L") || !j.contains("sha256")) {
    throw Error(ErrorCode::kSchema, "fixture file needs 'system', 'L' and 'sha256'");
  }
  Fixture f;
  f.system = io::system_from_json(j["system"]);
  f.L = io::matrix_from_json(j["L"], "L", f.system.m(), -1);
  f.sha256 = fixture_checksum(f.system, f.L);
  if (!j["sha256"].is_string() || j["sha256"].get<std::string>() != f.sha256) {
    throw Error(ErrorCode::kChecksum, "fixture checksum mismatch in '" + path + "': stored " +
                                          j["sha256"].dump() + ", computed " + f.sha256);
  }
  return f;
}

NetworkSystem assemble_power_network(const std::vector<PowerAreaParams>& params) {
  const int N = static_cast<int>(params.size());
  if (N < 2) throw Error(ErrorCode::kInvalidArgument, "power network needs N >= 2 areas");
  std::vector<int> sizes(N, 4);
  sizes[0] = 3;
  const auto off = block_offsets(sizes);
  const int n = off[N];
  Matrix A = Matrix::Zero(n, n), B = Matrix::Zero(n, N), C = Matrix::Zero(N, n);
  for (int i = 0; i < N; ++i) {
    const PowerAreaParams& p = params[i];
    const int w = off[i], pm = w + 1, pv = w + 2;
    A(w, w) = -p.D / p.M;
    A(w, pm) = -1.0 / p.M;
    A(pm, pm) = -1.0 / p.T_CH;
    A(pm, pv) = 1.0 / p.T_CH;
    A(pv, w) = -1.0 / (p.R * p.T_G);
    A(pv, pv) = -1.0 / p.T_G;
    B(pv, i) = 1.0 / p.T_G;
    C(i, w) = 1.0;
    if (i > 0) {
      // State P_tie^{i,i-1}; area i-1 sees P_tie^{i-1,i} = -P_tie^{i,i-1}.
      const int t = w + 3, wp = off[i - 1];
      A(w, t) = -1.0 / p.M;
      A(wp, t) = 1.0 / params[i - 1].M;
      A(t, w) = p.T_tie;
      A(t, wp) = -p.T_tie;
    }
  }
  NetworkSystem sys;
  sys.A = A;
  sys.B = B;
  sys.C = C;
  Topology& t = sys.topology;
  t.N = N;
  t.sizes = sizes;
  t.m = N;
  t.p = N;
  t.state_neighbors.resize(N);
  t.input_neighbors = IndexSets(N);
  t.input_sizes.assign(N, 1);
  for (int i = 0; i < N; ++i) {
    for (int j = std::max(0, i - 1); j <= std::min(N - 1, i + 1); ++j)
      t.state_neighbors[i].push_back(j);
    (*t.input_neighbors)[i] = {i};
  }
  return sys;
}

PowerNetwork generate_power_network(int N, std::uint64_t seed) {
  if (N < 2) throw Error(ErrorCode::kInvalidArgument, "power network needs N >= 2 areas");
  std::mt19937_64 rng(seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  PowerNetwork out;
  for (int draw = 0; draw < kMaxPowerDraws; ++draw) {
    std::vector<PowerAreaParams> params(N);
    for (PowerAreaParams& p : params) {
      p.D = uni(0.255, 80.0);
      p.M = uni(1.0, 5.0);
      p.T_CH = uni(1.0, 5.0);
      p.R = uni(0.03, 0.07);
      p.T_G = uni(4.0, 10.0);
      p.T_tie = uni(1.5, 2.5);
    }
    params[0].T_tie = 0.0;
    NetworkSystem sys = assemble_power_network(params);
    if (linalg::is_hurwitz(sys.A)) {
      out.system = std::move(sys);
      out.params = std::move(params);
      out.redraws = draw;
      if (draw > 0) {
        out.warnings.push_back("discarded " + std::to_string(draw) +
                               " unstable parameter draw(s) before a stable one");
      }
      validate_system(out.system);
      return out;
    }
  }
  throw Error(ErrorCode::kUnstable, "no stable power network draw for N = " + std::to_string(N) +
                                        " after " + std::to_string(kMaxPowerDraws) + " draws");
}

NetworkSystem generate_random_positive(const Topology& topology, std::uint64_t seed, double lo,
                                       double hi) {
  topology.validate();
  if (!(lo < hi)) throw Error(ErrorCode::kInvalidArgument, "interval must satisfy lo < hi");
  const int n = topology.n();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> entry(lo, hi), unit(0.0, 1.0);
  Matrix A(n, n), B(n, topology.m), C(topology.p, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = entry(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < topology.m; ++j) B(i, j) = unit(rng);
  for (int i = 0; i < topology.p; ++i)
    for (int j = 0; j < n; ++j) C(i, j) = unit(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) A(i, j) = std::max(0.0, A(i, j));

  NetworkSystem sys;
  sys.topology = topology;
  ReducedOrders full{topology.sizes};
  zero_forbidden_blocks(A, topology, full);
  sys.B = B;
  zero_forbidden_input_blocks(sys.B, topology, full);
  const double mr = linalg::spectrum(A).max_real_part;
  if (mr > -1.0) A.diagonal().array() -= mr + 1.0;
  sys.A = A;
  sys.C = C;
  validate_system(sys);
  return sys;
}

Topology fixture_topology() {
  Topology t;
  t.N = 4;
  t.sizes = {3, 3, 3, 3};
  t.state_neighbors = {{0, 1, 2}, {0, 1, 2}, {0, 1, 2, 3}, {2, 3}};
  t.m = 1;
  t.p = 1;
  return t;
}

PipelineConfig sweep_pipeline_defaults() {
  PipelineConfig pc;
  pc.starts = 1;
  pc.optimizer.max_iter = 400;
  return pc;
}

namespace {

SweepRow sweep_one(int N, const SweepConfig& cfg) {
  SweepRow row;
  row.N = N;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const PowerNetwork pn = generate_power_network(N, cfg.seed * 7919ULL + N);
    row.redraws = pn.redraws;
    PipelineConfig pc = cfg.pipeline;
    pc.seed = cfg.seed * 7919ULL + N;
    const PipelineResult res = reduce(pn.system, Matrix::Identity(N, N),
                                      ReducedOrders{std::vector<int>(N, 1)}, pc);
    row.h2_error = res.h2_error;
    row.sdp_objective = res.sdp ? res.sdp->objective : NAN;
    row.grad_iterations = res.grad ? res.grad->report.iterations : 0;
    row.stable = res.constraints.stable;
    row.chain_structured = res.constraints.structure_ok;
    row.ok = row.stable && row.chain_structured;
    if (!row.ok) row.error = "reduced model failed stability or structure";
  } catch (const Error& e) {
    row.error = e.what();
  }
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace

std::vector<SweepRow> sweep_h2_vs_N(const SweepConfig& cfg,
                                    const std::function<void(const SweepRow&)>& progress) {
  if (cfg.n_min < 2 || cfg.n_max > 64 || cfg.n_min > cfg.n_max) {
    throw Error(ErrorCode::kInvalidArgument, "sweep range must lie within 2..64 and be ordered");
  }
  const int count = cfg.n_max - cfg.n_min + 1;
  std::vector<SweepRow> rows(count);
  std::atomic<int> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (int k; (k = next.fetch_add(1)) < count;) {
      rows[k] = sweep_one(cfg.n_min + k, cfg);
      if (progress) {
        std::lock_guard<std::mutex> lock(mu);
        progress(rows[k]);
      }
    }
  };
  const int threads = std::clamp(cfg.threads, 1, count);
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool include_timing) {
  std::ostringstream os;
  os.precision(17);
  os << "N,h2_error,sdp_objective,grad_iterations,wall_seconds\n";
  for (const SweepRow& r : rows) {
    os << r.N << ',';
    if (r.ok) {
      os << r.h2_error << ',' << r.sdp_objective << ',' << r.grad_iterations;
    } else {
      os << "nan,nan,0";
    }
    os << ',';
    if (include_timing) {
      os.precision(6);
      os << r.wall_seconds;
      os.precision(17);
    } else {
      os << 0;
    }
    os << '\n';
  }
  return os.str();
}

int threads_from_env(int fallback) {
  const char* v = std::getenv("NETRED_THREADS");
  int n = fallback;
  if (v && *v) {
    char* end = nullptr;
    const long x = std::strtol(v, &end, 10);
    if (end && *end == '\0' && x > 0) n = static_cast<int>(x);
  }
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::clamp(n, 1, hw);
}

}  // namespace netred::bench
