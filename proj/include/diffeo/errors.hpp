#pragma once

#include <stdexcept>
#include <string>

namespace diffeo {

enum class ErrorCode {
    InvalidInput,
    NonManifold,
    DegenerateTriangle,
    MultipleBoundaries,
    ZeroPerimeter,
    SingularSystem,
    FoldOver,
    OutsideMesh,
    DegenerateGap,
    ExhaustedResampling,
    NonElliptic,
    SolverFailure,
    ShapeMismatch,
    NonFinite,
    ZeroTruthNorm,
    Diverged,
    ZeroVariance,
    EmptyTrainingSet,
    InsufficientData,
    Io,
};

const char* to_string(ErrorCode code) noexcept;

// Numerical failures map to CLI exit code 3, everything else to 2.
bool is_numerical(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace diffeo
