// netred: generate, reduce, evaluate, bode and sweep from the command line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "netred/benchmarks.hpp"
#include "netred/error.hpp"
#include "netred/io.hpp"
#include "netred/pipeline.hpp"
#include "netred/version.hpp"

using namespace netred;
using io::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConstraint = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::kStructure:
    case ErrorCode::kUnstable:
      return kExitConstraint;
    case ErrorCode::kNotConverged:
    case ErrorCode::kNoUniqueSolution:
    case ErrorCode::kInfeasible:
    case ErrorCode::kStalled:
    case ErrorCode::kPole:
      return kExitSolver;
    default:
      return kExitIo;
  }
}

void print_error(const std::string& code, const std::string& message, int exit_code) {
  Json j;
  j["error"] = {{"code", code}, {"message", message}, {"exit_code", exit_code}};
  std::cerr << j.dump() << "\n";
}

// Run manifest attached to every artifact.
struct Manifest {
  Json j;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  explicit Manifest(const std::string& command) {
    j["command"] = command;
    j["version"] = kVersion;
    j["params"] = Json::object();
    j["inputs"] = Json::object();
    j["status"] = "ok";
    j["warnings"] = Json::array();
  }
  void warn(const std::string& w) { j["warnings"].push_back(w); }
  Json finish() {
    j["timing"] = {{"wall_seconds",
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    return j;
  }
};

Json iv_summary(const ConstraintReport& r) {
  return {{"s_a_disjoint", r.s_a_disjoint},
          {"s_f_disjoint", r.s_f_disjoint},
          {"observable", r.observable},
          {"passed", r.iv_passed()}};
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::cout << content;
    std::cout.flush();
  } else {
    io::write_file_atomic(out, content);
  }
}

// CSV artifacts carry their manifest in a sibling file.
void emit_csv(const std::string& out, const std::string& csv, Manifest& m) {
  emit(out, csv);
  const std::string text = io::dump(m.finish());
  if (out.empty() || out == "-") {
    std::cerr << text;
  } else {
    io::write_file_atomic(out + ".manifest.json", text);
  }
}

// Checksum of the canonical system content, so manifests and timing fields
// inside the file do not change it.
NetworkSystem load_system(const std::string& path, Manifest& m, const char* role) {
  const Json j = io::parse_json(io::read_file(path), path);
  NetworkSystem sys = io::system_from_json(j);
  m.j["inputs"][role] = {{"path", path}, {"sha256", io::sha256_hex(io::system_to_json(sys).dump())}};
  return sys;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, std::string("bad integer list for ") + what + ": '" + s + "'");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, std::string("bad number list for ") + what + ": '" + s + "'");
    }
  }
  return out;
}

Json spectrum_json(const Matrix& M) {
  Json a = Json::array();
  if (M.size() == 0) return a;
  for (const Complex& z : linalg::spectrum(M).eigenvalues) a.push_back({z.real(), z.imag()});
  return a;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string kind;
  int areas = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  Manifest m("generate");
  m.j["params"] = {{"kind", a.kind}, {"out", a.out}};
  m.j["seed"] = a.seed;
  NetworkSystem sys;
  if (a.kind == "fixture") {
    const bench::Fixture f = bench::fixture_positive_network();
    sys = f.system;
    m.j["inputs"]["fixture"] = {{"path", bench::default_fixture_path()}, {"sha256", f.sha256}};
  } else if (a.kind == "power") {
    m.j["params"]["areas"] = a.areas;
    const bench::PowerNetwork pn = bench::generate_power_network(a.areas, a.seed);
    sys = pn.system;
    m.j["params"]["redraws"] = pn.redraws;
    for (const std::string& w : pn.warnings) m.warn(w);
  } else if (a.kind == "random-positive") {
    sys = bench::generate_random_positive(bench::fixture_topology(), a.seed);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown kind '" + a.kind + "'");
  }
  Json j = io::system_to_json(sys);
  j["manifest"] = m.finish();
  emit(a.out, io::dump(j));
  return kExitOk;
}

// ---- reduce ---------------------------------------------------------------

struct ReduceArgs {
  std::string system;
  std::string method = "sdp+grad";
  std::string orders;
  std::string L_policy = "canonical-last";
  std::string L_file;
  std::string s_grid;
  std::string pi_mode = "tracking";
  double epsilon = 1e-6;
  int max_iter = 5000;
  int starts = 32;
  int screen_iter = 300;
  int continue_starts = 3;
  double perturbation = 0.01;
  double sdp_tol = 1e-7;
  int sdp_max_iter = 150;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_reduce(const ReduceArgs& a) {
  Manifest m("reduce");
  const NetworkSystem sys = load_system(a.system, m, "system");
  const Topology& t = sys.topology;

  ReducedOrders orders{a.orders.empty() ? std::vector<int>(t.N, 1)
                                        : parse_int_list(a.orders, "--orders")};
  orders.validate(t);
  const int nu = orders.total();

  Matrix L;
  if (a.L_policy == "identity") {
    if (sys.m() != nu)
      throw Error(ErrorCode::kDimension, "L identity needs m = nu, got m = " +
                                             std::to_string(sys.m()) + ", nu = " + std::to_string(nu));
    L = Matrix::Identity(nu, nu);
  } else if (a.L_policy == "canonical-last") {
    L = canonical_last_L(sys.m(), nu);
  } else if (a.L_policy == "file") {
    if (a.L_file.empty()) throw Error(ErrorCode::kInvalidArgument, "--L file needs --L-file");
    const Json j = io::parse_json(io::read_file(a.L_file), a.L_file);
    L = io::matrix_from_json(j.is_object() && j.contains("L") ? j["L"] : j, "L", sys.m(), nu);
    m.j["inputs"]["L"] = {{"path", a.L_file}, {"sha256", io::sha256_hex(io::matrix_to_json(L).dump())}};
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown L policy '" + a.L_policy + "'");
  }

  PipelineConfig cfg;
  cfg.method = parse_method(a.method);
  if (!a.s_grid.empty()) {
    const std::vector<double> d = parse_double_list(a.s_grid, "--s-grid");
    if (static_cast<int>(d.size()) != nu)
      throw Error(ErrorCode::kDimension, "--s-grid needs " + std::to_string(nu) + " values");
    cfg.s_grid = Eigen::Map<const Vector>(d.data(), nu).asDiagonal();
  }
  if (a.pi_mode == "tracking") {
    cfg.optimizer.pi_mode = opt::PiMode::kTracking;
  } else if (a.pi_mode == "fixed") {
    cfg.optimizer.pi_mode = opt::PiMode::kFixed;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown --pi-mode '" + a.pi_mode + "'");
  }
  cfg.optimizer.epsilon = a.epsilon;
  cfg.optimizer.max_iter = a.max_iter;
  cfg.starts = a.starts;
  cfg.screen_iter = a.screen_iter;
  cfg.continue_starts = a.continue_starts;
  cfg.perturbation = a.perturbation;
  cfg.sdp.tol = a.sdp_tol;
  cfg.sdp.max_iterations = a.sdp_max_iter;
  cfg.seed = a.seed;

  m.j["params"] = {{"method", to_string(cfg.method)},
                   {"orders", orders.orders},
                   {"L", a.L_policy},
                   {"s_grid", a.s_grid.empty() ? Json(nullptr) : Json(a.s_grid)},
                   {"pi_mode", a.pi_mode},
                   {"epsilon", a.epsilon},
                   {"max_iter", a.max_iter},
                   {"starts", a.starts},
                   {"screen_iter", a.screen_iter},
                   {"continue_starts", a.continue_starts},
                   {"perturbation", a.perturbation},
                   {"sdp_tol", a.sdp_tol},
                   {"sdp_max_iter", a.sdp_max_iter},
                   {"out", a.out}};
  m.j["seed"] = a.seed;

  const PipelineResult res = reduce(sys, L, orders, cfg);
  for (const std::string& w : res.warnings) m.warn(w);

  int code = kExitOk;
  std::string termination = "ok";
  if (res.sdp) {
    m.j["sdp"] = {{"status", std::string(sdp::to_string(res.sdp->status))},
                  {"objective", res.sdp->objective},
                  {"iterations", res.sdp->iterations},
                  {"audit_passed", res.sdp->audit_passed},
                  {"recovered", res.sdp->recovered}};
  }
  if (res.grad) {
    const opt::OptimizerReport& r = res.grad->report;
    termination = opt::to_string(r.termination);
    m.j["grad"] = {{"termination", termination},
                   {"iterations", r.iterations},
                   {"gradient_mapping", r.gradmap_history.empty() ? 0.0 : r.gradmap_history.back()},
                   {"starts_run", res.grad->starts_run},
                   {"best_start", res.grad->best_start},
                   {"continued", res.grad->continued}};
    if (r.termination == opt::Termination::kStalled) {
      code = kExitSolver;
      m.j["status"] = "optimizer-stalled";
    }
  }
  m.j["termination"] = termination;
  m.j["iv"] = iv_summary(res.constraints);
  m.j["moments_passed"] = res.moments.passed;
  if (!res.moments.passed) m.warn("moment check failed at one or more points of sigma(S)");
  if (!res.constraints.iv_passed()) m.warn("constraints (iv) not satisfied");
  if (!res.constraints.hard_passed()) {
    code = kExitConstraint;
    m.j["status"] = "constraint-failure";
  }

  Json j = io::reduced_to_json(res.model, res.h2_error, res.constraints);
  j["manifest"] = m.finish();
  emit(a.out, io::dump(j));
  if (code == kExitConstraint) {
    print_error("constraint", "reduced model fails structure or stability", code);
  } else if (code == kExitSolver) {
    print_error("stalled", res.grad->report.message, code);
  }
  return code;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string system;
  std::string reduced;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Manifest m("evaluate");
  m.j["params"] = {{"out", a.out}};
  const NetworkSystem sys = load_system(a.system, m, "system");
  const Json rj = io::parse_json(io::read_file(a.reduced), a.reduced);
  const ReducedNetwork red = io::reduced_from_json(rj, sys);
  m.j["inputs"]["reduced"] = {{"path", a.reduced},
                              {"sha256", io::sha256_hex(io::reduced_to_json(red, 0.0, {}).dump())}};
  for (const std::string& w : red.warnings) m.warn(w);

  ConstraintReport cr;
  cr.structure_ok = structure_violations(red.F, red.topology, red.orders).empty();
  if (red.Pi.size() > 0) cr = check_problem_constraints(sys, red);
  Json report;
  double h2 = NAN;
  if (cr.stable) {
    h2 = h2_norm(error_realization(sys, red));
    report["moments"] = io::moment_report_to_json(verify_moment_matching(sys, red));
  } else {
    report["moments"] = nullptr;
  }
  report["h2_error"] = std::isfinite(h2) ? Json(h2) : Json(nullptr);
  report["constraint_report"] = io::constraint_report_to_json(cr);
  report["spectra"] = {{"A", spectrum_json(sys.A)},
                       {"S", spectrum_json(red.S)},
                       {"F", spectrum_json(red.F)}};
  m.j["iv"] = iv_summary(cr);
  const int code = cr.hard_passed() ? kExitOk : kExitConstraint;
  if (code != kExitOk) m.j["status"] = "constraint-failure";
  report["manifest"] = m.finish();
  emit(a.out, io::dump(report));
  if (code != kExitOk) print_error("constraint", "reduced model fails structure or stability", code);
  return code;
}

// ---- bode -----------------------------------------------------------------

struct BodeArgs {
  std::string system;
  std::string reduced;
  double wmin = 1e-6;
  double wmax = 1e2;
  int points = 400;
  std::string out;
};

int cmd_bode(const BodeArgs& a) {
  if (!(a.wmin > 0.0) || !(a.wmax > a.wmin) || a.points < 2)
    throw Error(ErrorCode::kInvalidArgument, "need 0 < wmin < wmax and points >= 2");
  Manifest m("bode");
  m.j["params"] = {{"wmin", a.wmin}, {"wmax", a.wmax}, {"points", a.points}, {"out", a.out}};
  const NetworkSystem sys = load_system(a.system, m, "system");
  const Json rj = io::parse_json(io::read_file(a.reduced), a.reduced);
  const ReducedNetwork red = io::reduced_from_json(rj, sys);
  if (!linalg::is_hurwitz(sys.A) || !linalg::is_hurwitz(red.F))
    throw Error(ErrorCode::kUnstable, "bode needs stable full and reduced models");

  const TransferEvaluator full(sys.A, sys.B, sys.C);
  const TransferEvaluator reduced(red.F, red.G, red.H);
  std::ostringstream os;
  os.precision(17);
  os << "omega_rad_s,mag_full,mag_reduced\n";
  const double l0 = std::log10(a.wmin), l1 = std::log10(a.wmax);
  int skipped = 0;
  for (int k = 0; k < a.points; ++k) {
    const double w = std::pow(10.0, l0 + (l1 - l0) * k / (a.points - 1));
    try {
      const double mf = largest_singular_value(full(Complex(0.0, w)));
      const double mr = largest_singular_value(reduced(Complex(0.0, w)));
      os << w << ',' << mf << ',' << mr << '\n';
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kPole) throw;
      ++skipped;
      std::ostringstream note;
      note.precision(17);
      note << "skipped omega = " << w << ": " << e.what();
      m.warn(note.str());
    }
  }
  m.j["params"]["skipped"] = skipped;
  emit_csv(a.out, os.str(), m);
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string areas = "4:30";
  std::uint64_t seed = 0;
  int starts = 1;
  int max_iter = 400;
  bool no_timing = false;
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  Manifest m("sweep");
  bench::SweepConfig cfg;
  const auto colon = a.areas.find(':');
  try {
    if (colon == std::string::npos) {
      cfg.n_min = cfg.n_max = std::stoi(a.areas);
    } else {
      cfg.n_min = std::stoi(a.areas.substr(0, colon));
      cfg.n_max = std::stoi(a.areas.substr(colon + 1));
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "--areas expects N or NMIN:NMAX, got '" + a.areas + "'");
  }
  cfg.seed = a.seed;
  cfg.pipeline.starts = a.starts;
  cfg.pipeline.optimizer.max_iter = a.max_iter;
  cfg.threads = bench::threads_from_env(1);
  m.j["params"] = {{"areas", a.areas},
                   {"starts", a.starts},
                   {"max_iter", a.max_iter},
                   {"threads", cfg.threads},
                   {"timing_column", !a.no_timing},
                   {"out", a.out}};
  m.j["seed"] = a.seed;

  const auto rows = bench::sweep_h2_vs_N(cfg, [](const bench::SweepRow& r) {
    if (!r.ok) std::cerr << "sweep: N = " << r.N << " failed: " << r.error << "\n";
  });
  int failed = 0;
  Json per_n = Json::array();
  for (const bench::SweepRow& r : rows) {
    if (!r.ok) {
      ++failed;
      m.warn("N = " + std::to_string(r.N) + ": " + r.error);
    }
    per_n.push_back({{"N", r.N},
                     {"ok", r.ok},
                     {"stable", r.stable},
                     {"chain_structured", r.chain_structured},
                     {"redraws", r.redraws}});
  }
  m.j["rows"] = per_n;
  if (failed > 0) m.j["status"] = "partial";
  emit_csv(a.out, bench::sweep_csv(rows, !a.no_timing), m);
  return failed > 0 ? kExitConstraint : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-preserving moment-matching reduction of network systems"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a network system file");
  gen->add_option("kind", ga.kind, "fixture | power | random-positive")
      ->required()
      ->check(CLI::IsMember({"fixture", "power", "random-positive"}));
  gen->add_option("--areas", ga.areas, "Number of areas (power)")->capture_default_str();
  gen->add_option("--seed", ga.seed, "RNG seed")->capture_default_str();
  gen->add_option("--out,-o", ga.out, "Output file (stdout if omitted)");

  ReduceArgs ra;
  auto* red = app.add_subcommand("reduce", "Compute a reduced model");
  red->add_option("system", ra.system, "System JSON file")->required();
  red->add_option("--method", ra.method, "sdp | grad | sdp+grad")
      ->check(CLI::IsMember({"sdp", "grad", "sdp+grad"}))
      ->capture_default_str();
  red->add_option("--orders", ra.orders, "Comma-separated reduced orders (default all 1)");
  red->add_option("--L", ra.L_policy, "identity | canonical-last | file")
      ->check(CLI::IsMember({"identity", "canonical-last", "file"}))
      ->capture_default_str();
  red->add_option("--L-file", ra.L_file, "JSON file holding L (matrix or {\"L\": matrix})");
  red->add_option("--s-grid", ra.s_grid, "Comma-separated diagonal of the relaxation S");
  red->add_option("--pi-mode", ra.pi_mode, "tracking | fixed")
      ->check(CLI::IsMember({"tracking", "fixed"}))
      ->capture_default_str();
  red->add_option("--epsilon", ra.epsilon, "Gradient-mapping tolerance")->capture_default_str();
  red->add_option("--max-iter", ra.max_iter, "Gradient iterations per start")->capture_default_str();
  red->add_option("--starts", ra.starts, "Gradient starts")->capture_default_str();
  red->add_option("--screen-iter", ra.screen_iter, "Screening iterations per start")
      ->capture_default_str();
  red->add_option("--continue-starts", ra.continue_starts, "Screened starts rerun in full")
      ->capture_default_str();
  red->add_option("--perturbation", ra.perturbation, "Relative start perturbation")
      ->capture_default_str();
  red->add_option("--sdp-tol", ra.sdp_tol, "SDP tolerance")->capture_default_str();
  red->add_option("--sdp-max-iter", ra.sdp_max_iter, "SDP iterations")->capture_default_str();
  red->add_option("--seed", ra.seed, "RNG seed")->capture_default_str();
  red->add_option("--out,-o", ra.out, "Output file (stdout if omitted)");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Report H2 error, moments and constraints");
  ev->add_option("system", ea.system, "System JSON file")->required();
  ev->add_option("reduced", ea.reduced, "Reduced-model JSON file")->required();
  ev->add_option("--out,-o", ea.out, "Output file (stdout if omitted)");

  BodeArgs ba;
  auto* bode = app.add_subcommand("bode", "Magnitude response of full and reduced models");
  bode->add_option("system", ba.system, "System JSON file")->required();
  bode->add_option("reduced", ba.reduced, "Reduced-model JSON file")->required();
  bode->add_option("--wmin", ba.wmin, "Lowest frequency [rad/s]")->capture_default_str();
  bode->add_option("--wmax", ba.wmax, "Highest frequency [rad/s]")->capture_default_str();
  bode->add_option("--points", ba.points, "Logarithmic grid points")->capture_default_str();
  bode->add_option("--out,-o", ba.out, "CSV file (stdout if omitted)");

  SweepArgs sa;
  auto* sw = app.add_subcommand("sweep", "H2 error of power-network reductions versus N");
  sw->add_option("--areas", sa.areas, "N or NMIN:NMAX")->capture_default_str();
  sw->add_option("--seed", sa.seed, "RNG seed")->capture_default_str();
  sw->add_option("--starts", sa.starts, "Gradient starts per N")->capture_default_str();
  sw->add_option("--max-iter", sa.max_iter, "Gradient iterations per start")->capture_default_str();
  sw->add_flag("--no-timing", sa.no_timing, "Write 0 in the wall_seconds column");
  sw->add_option("--out,-o", sa.out, "CSV file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    print_error("usage", e.what(), kExitIo);
    return kExitIo;
  }

  try {
    if (*gen) return cmd_generate(ga);
    if (*red) return cmd_reduce(ra);
    if (*ev) return cmd_evaluate(ea);
    if (*bode) return cmd_bode(ba);
    if (*sw) return cmd_sweep(sa);
  } catch (const Error& e) {
    const int code = exit_code_for(e.code());
    print_error(std::string(to_string(e.code())), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    print_error("internal", e.what(), kExitSolver);
    return kExitSolver;
  }
  return kExitIo;
}
