#pragma once

#include <stdexcept>
#include <string>

namespace lrcp {

// Failure modes of the public operations. The code name is the stable part of
// the diagnostic; messages add the offending values.
enum class ErrorCode {
    RankDeficient,
    DidNotConverge,
    MatrixTooLarge,
    InvalidRank,
    DimensionMismatch,
    RankMismatch,
    EmptyInput,
    NonFiniteValue,
    BudgetExceedsTokens,
    InvalidRatio,
    ZeroKeep,
    StageShapeMismatch,
    InvalidComponentCount,
    InvalidPercentage,
    InsufficientSpectrum,
    TooFewSurvivors,
    KeepBelowRank,
    InvalidSpectrum,
    DimensionTooSmall,
    TooManySubsets,
    MalformedHeader,
    ShapeMismatch,
    IoFailure,
    InvalidArgument,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DidNotConverge: return "DidNotConverge";
        case ErrorCode::MatrixTooLarge: return "MatrixTooLarge";
        case ErrorCode::InvalidRank: return "InvalidRank";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::RankMismatch: return "RankMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::BudgetExceedsTokens: return "BudgetExceedsTokens";
        case ErrorCode::InvalidRatio: return "InvalidRatio";
        case ErrorCode::ZeroKeep: return "ZeroKeep";
        case ErrorCode::StageShapeMismatch: return "StageShapeMismatch";
        case ErrorCode::InvalidComponentCount: return "InvalidComponentCount";
        case ErrorCode::InvalidPercentage: return "InvalidPercentage";
        case ErrorCode::InsufficientSpectrum: return "InsufficientSpectrum";
        case ErrorCode::TooFewSurvivors: return "TooFewSurvivors";
        case ErrorCode::KeepBelowRank: return "KeepBelowRank";
        case ErrorCode::InvalidSpectrum: return "InvalidSpectrum";
        case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
        case ErrorCode::TooManySubsets: return "TooManySubsets";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace lrcp
