#pragma once

#include <stdexcept>
#include <string>

namespace powernet {

/// Machine-readable failure categories surfaced by the library.
enum class ErrorCode {
    DimensionMismatch,
    PositivityViolation,
    SelfLoop,
    HorizonMismatch,
    EmptyNetwork,
    InvalidParameter,
    InfeasibleBounds,
    SingularOutputDerivative,
    NotRelaxable,
    RequirementUnmet,
    UnboundedBox,
    NotSolved,
    NotExactified,
    NoDissipativePath,
    ProjectionInfeasible,
    SizeGuard,
    AmbiguousRoot,
    SchemaViolation,
    IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace powernet
