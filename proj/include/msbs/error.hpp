#pragma once

#include <stdexcept>
#include <string>

namespace msbs {

enum class ErrorKind {
    // input / configuration problems (exit code 2)
    TooFewDistinctValues,
    DegenerateRange,
    ZeroResponseVariance,
    InvalidInput,
    InvalidCorrelation,
    DimensionMismatch,
    EmptyPilot,
    EmptyTrace,
    DomainViolation,
    // numerical / admissibility problems (exit code 3)
    IdentifiabilityViolation,
    InvalidModel,
    InadmissibleFullModel,
    RankDeficient,
    AllCoordinatesDegenerate,
    NoNonlinearComponents,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::TooFewDistinctValues: return "TooFewDistinctValues";
        case ErrorKind::DegenerateRange: return "DegenerateRange";
        case ErrorKind::ZeroResponseVariance: return "ZeroResponseVariance";
        case ErrorKind::InvalidInput: return "InvalidInput";
        case ErrorKind::InvalidCorrelation: return "InvalidCorrelation";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::EmptyPilot: return "EmptyPilot";
        case ErrorKind::EmptyTrace: return "EmptyTrace";
        case ErrorKind::DomainViolation: return "DomainViolation";
        case ErrorKind::IdentifiabilityViolation: return "IdentifiabilityViolation";
        case ErrorKind::InvalidModel: return "InvalidModel";
        case ErrorKind::InadmissibleFullModel: return "InadmissibleFullModel";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::AllCoordinatesDegenerate: return "AllCoordinatesDegenerate";
        case ErrorKind::NoNonlinearComponents: return "NoNonlinearComponents";
    }
    return "Unknown";
}

/// Process exit code used by the command-line tool for an error of this kind.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::IdentifiabilityViolation:
        case ErrorKind::InvalidModel:
        case ErrorKind::InadmissibleFullModel:
        case ErrorKind::RankDeficient:
        case ErrorKind::AllCoordinatesDegenerate:
        case ErrorKind::NoNonlinearComponents:
            return 3;
        default:
            return 2;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace msbs
