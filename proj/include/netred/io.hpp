#pragma once

// JSON model files, checksums and atomic file output.

#include <string>

#include "json.hpp"
#include "netred/network.hpp"

namespace netred::io {

using Json = nlohmann::json;

Json matrix_to_json(const Matrix& M);
/// Nested row arrays. rows/cols < 0 accept any shape; an empty array is a
/// 0 x cols matrix.
Matrix matrix_from_json(const Json& j, const char* name, long rows = -1, long cols = -1);

Json system_to_json(const NetworkSystem& sys);
/// Validates the schema and the system (Hurwitz A, topology zeros).
NetworkSystem system_from_json(const Json& j);

Json constraint_report_to_json(const ConstraintReport& r);
Json moment_report_to_json(const MomentReport& r);

/// { orders, S, G, L, H, h2_error, constraint_report }.
Json reduced_to_json(const ReducedNetwork& red, double h2_error, const ConstraintReport& report);
/// Rebuilds F = S - GL and Pi(S) against sys; H is taken verbatim from the
/// file so a tampered H is evaluated as such.
ReducedNetwork reduced_from_json(const Json& j, const NetworkSystem& sys);

std::string sha256_hex(const std::string& data);

std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it over path.
void write_file_atomic(const std::string& path, const std::string& content);

Json parse_json(const std::string& text, const std::string& origin);
/// Two-space indented dump with a trailing newline.
std::string dump(const Json& j);

}  // namespace netred::io
