#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace netred {

enum class ErrorCode {
  kInvalidArgument,
  kDimension,
  kNotConverged,
  kNoUniqueSolution,
  kUnstable,
  kStructure,
  kPole,
  kInfeasible,
  kStalled,
  kIo,
  kSchema,
  kChecksum,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. The code drives CLI exit statuses
/// and the machine-readable error JSON.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace netred
