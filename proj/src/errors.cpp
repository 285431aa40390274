#include "diffeo/errors.hpp"

namespace diffeo {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::NonManifold: return "NonManifold";
        case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
        case ErrorCode::MultipleBoundaries: return "MultipleBoundaries";
        case ErrorCode::ZeroPerimeter: return "ZeroPerimeter";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::FoldOver: return "FoldOver";
        case ErrorCode::OutsideMesh: return "OutsideMesh";
        case ErrorCode::DegenerateGap: return "DegenerateGap";
        case ErrorCode::ExhaustedResampling: return "ExhaustedResampling";
        case ErrorCode::NonElliptic: return "NonElliptic";
        case ErrorCode::SolverFailure: return "SolverFailure";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::ZeroTruthNorm: return "ZeroTruthNorm";
        case ErrorCode::Diverged: return "Diverged";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::SingularSystem:
        case ErrorCode::FoldOver:
        case ErrorCode::OutsideMesh:
        case ErrorCode::SolverFailure:
        case ErrorCode::NonFinite:
        case ErrorCode::Diverged:
        case ErrorCode::ZeroVariance:
            return true;
        default:
            return false;
    }
}

}  // namespace diffeo
