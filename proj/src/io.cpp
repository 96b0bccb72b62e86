#include "netred/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "netred/error.hpp"

namespace netred::io {

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw Error(ErrorCode::kSchema, "schema error: " + what);
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) schema_error("expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(std::string("missing field '") + key + "'");
  return *it;
}

int int_field(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer()) schema_error(std::string("'") + key + "' must be an integer");
  return v.get<int>();
}

std::vector<int> int_list(const Json& v, const char* name) {
  if (!v.is_array()) schema_error(std::string("'") + name + "' must be an array");
  std::vector<int> out;
  for (const Json& e : v) {
    if (!e.is_number_integer()) schema_error(std::string("'") + name + "' must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

IndexSets index_sets(const Json& v, const char* name) {
  if (!v.is_array()) schema_error(std::string("'") + name + "' must be an array of arrays");
  IndexSets out;
  for (const Json& e : v) out.push_back(int_list(e, name));
  return out;
}

Json blocks_to_json(const std::vector<BlockIndex>& v) {
  Json a = Json::array();
  for (const BlockIndex& b : v) a.push_back({b.first, b.second});
  return a;
}

Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

Json matrix_to_json(const Matrix& M) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const char* name, long rows, long cols) {
  if (!j.is_array()) schema_error(std::string("'") + name + "' must be an array of rows");
  const long r = static_cast<long>(j.size());
  long c = r > 0 ? (j[0].is_array() ? static_cast<long>(j[0].size()) : -1) : std::max(cols, 0L);
  if (c < 0) schema_error(std::string("'") + name + "' rows must be arrays");
  if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols)) {
    std::ostringstream os;
    os << "'" << name << "' is " << r << "x" << c << ", expected " << rows << "x" << cols;
    throw Error(ErrorCode::kDimension, os.str());
  }
  Matrix M(r, c);
  for (long i = 0; i < r; ++i) {
    const Json& row = j[i];
    if (!row.is_array() || static_cast<long>(row.size()) != c)
      schema_error(std::string("'") + name + "' has ragged rows");
    for (long k = 0; k < c; ++k) {
      if (!row[k].is_number()) schema_error(std::string("'") + name + "' must hold numbers");
      M(i, k) = row[k].get<double>();
    }
  }
  return M;
}

Json system_to_json(const NetworkSystem& sys) {
  const Topology& t = sys.topology;
  Json j;
  j["N"] = t.N;
  j["sizes"] = t.sizes;
  j["state_neighbors"] = t.state_neighbors;
  if (t.input_neighbors) {
    j["input_neighbors"] = *t.input_neighbors;
    if (!t.input_sizes.empty()) j["input_sizes"] = t.input_sizes;
  }
  j["m"] = t.m;
  j["p"] = t.p;
  j["A"] = matrix_to_json(sys.A);
  j["B"] = matrix_to_json(sys.B);
  j["C"] = matrix_to_json(sys.C);
  return j;
}

NetworkSystem system_from_json(const Json& j) {
  NetworkSystem sys;
  Topology& t = sys.topology;
  t.N = int_field(j, "N");
  t.sizes = int_list(field(j, "sizes"), "sizes");
  t.state_neighbors = index_sets(field(j, "state_neighbors"), "state_neighbors");
  if (j.contains("input_neighbors") && !j["input_neighbors"].is_null()) {
    t.input_neighbors = index_sets(j["input_neighbors"], "input_neighbors");
    if (j.contains("input_sizes")) t.input_sizes = int_list(j["input_sizes"], "input_sizes");
  }
  t.m = int_field(j, "m");
  t.p = int_field(j, "p");
  t.validate();
  const long n = t.n();
  sys.A = matrix_from_json(field(j, "A"), "A", n, n);
  sys.B = matrix_from_json(field(j, "B"), "B", n, t.m);
  sys.C = matrix_from_json(field(j, "C"), "C", t.p, n);
  validate_system(sys);
  return sys;
}

Json constraint_report_to_json(const ConstraintReport& r) {
  Json j;
  j["structure_ok"] = r.structure_ok;
  j["structure_violations"] = blocks_to_json(r.structure_violations);
  j["input_violations"] = blocks_to_json(r.input_violations);
  j["stable"] = r.stable;
  j["max_real_part_F"] = finite_or_null(r.max_real_part_F);
  j["s_a_disjoint"] = r.s_a_disjoint;
  j["gap_s_a"] = finite_or_null(r.gap_s_a);
  j["s_f_disjoint"] = r.s_f_disjoint;
  j["gap_s_f"] = finite_or_null(r.gap_s_f);
  j["observable"] = r.observable;
  j["observability_rank"] = r.observability_rank;
  j["nu"] = r.nu;
  j["iv_passed"] = r.iv_passed();
  j["hard_passed"] = r.hard_passed();
  j["h2_error"] = r.h2_error ? finite_or_null(*r.h2_error) : Json(nullptr);
  return j;
}

Json moment_report_to_json(const MomentReport& r) {
  Json j;
  j["passed"] = r.passed;
  j["algebraic"] = r.algebraic;
  j["algebraic_residual"] = finite_or_null(r.algebraic_residual);
  Json pts = Json::array();
  for (const InterpolationPoint& p : r.points) {
    pts.push_back({{"s_re", p.s.real()},
                   {"s_im", p.s.imag()},
                   {"residual", finite_or_null(p.residual)},
                   {"scale", finite_or_null(p.scale)},
                   {"passed", p.passed}});
  }
  j["points"] = std::move(pts);
  return j;
}

Json reduced_to_json(const ReducedNetwork& red, double h2_error, const ConstraintReport& report) {
  Json j;
  j["orders"] = red.orders.orders;
  j["S"] = matrix_to_json(red.S);
  j["G"] = matrix_to_json(red.G);
  j["L"] = matrix_to_json(red.L);
  j["H"] = matrix_to_json(red.H);
  j["h2_error"] = finite_or_null(h2_error);
  j["constraint_report"] = constraint_report_to_json(report);
  return j;
}

ReducedNetwork reduced_from_json(const Json& j, const NetworkSystem& sys) {
  ReducedOrders orders{int_list(field(j, "orders"), "orders")};
  orders.validate(sys.topology);
  const long nu = orders.total();
  const Matrix S = matrix_from_json(field(j, "S"), "S", nu, nu);
  const Matrix G = matrix_from_json(field(j, "G"), "G", nu, sys.m());
  const Matrix L = matrix_from_json(field(j, "L"), "L", sys.m(), nu);
  const Matrix H = matrix_from_json(field(j, "H"), "H", sys.p(), nu);
  ReducedNetwork red;
  try {
    red = build_reduced(sys, S, G, L, orders);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnstable && e.code() != ErrorCode::kStructure) throw;
    // Keep the model as stored so the evaluation can report the failure.
    red = ReducedNetwork{};
    red.S = S;
    red.G = G;
    red.L = L;
    red.F = S - G * L;
    red.orders = orders;
    red.topology = sys.topology;
    red.warnings.push_back(e.what());
    try {
      red.Pi = compute_pi(sys, S, L);
    } catch (const Error&) {
      red.Pi.resize(0, 0);
    }
  }
  red.H = H;
  return red;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorCode::kIo, "SHA-256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw Error(ErrorCode::kIo, "write to '" + tmp + "' failed");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::kIo, "cannot rename '" + tmp + "' to '" + path + "'");
  }
}

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kSchema, "invalid JSON in " + origin + ": " + e.what());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace netred::io
