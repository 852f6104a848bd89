#pragma once

#include <stdexcept>
#include <string>

namespace scoregen {

// Error identities used across the library. Tests match on these codes
// rather than on message text.
enum class Errc {
    UnknownLabel,
    BadShadowTarget,
    DuplicateShadow,
    UnreadableSource,
    EmptyImage,
    AugmentationForbidden,
    DegreesOutOfRange,
    EmptyDataset,
    EmptyFocusSet,
    ShapeMismatch,
    ScoreOutOfRange,
    LengthMismatch,
    NotADistribution,
    BatchTooSmall,
    BatchMismatch,
    BothCyclesZero,
    NonFiniteLoss,
    MalformedDocument,
    UnsupportedStructure,
    PitchOutOfRange,
    MissingSymbolClass,
    EmptyBank,
    DimensionMismatch,
    TooFewSamples,
    ZeroVector,
    EmptyDirectory,
    ExtractorUnavailable,
    BadConfig,
    IoError,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::UnknownLabel: return "UnknownLabel";
        case Errc::BadShadowTarget: return "BadShadowTarget";
        case Errc::DuplicateShadow: return "DuplicateShadow";
        case Errc::UnreadableSource: return "UnreadableSource";
        case Errc::EmptyImage: return "EmptyImage";
        case Errc::AugmentationForbidden: return "AugmentationForbidden";
        case Errc::DegreesOutOfRange: return "DegreesOutOfRange";
        case Errc::EmptyDataset: return "EmptyDataset";
        case Errc::EmptyFocusSet: return "EmptyFocusSet";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::NotADistribution: return "NotADistribution";
        case Errc::BatchTooSmall: return "BatchTooSmall";
        case Errc::BatchMismatch: return "BatchMismatch";
        case Errc::BothCyclesZero: return "BothCyclesZero";
        case Errc::NonFiniteLoss: return "NonFiniteLoss";
        case Errc::MalformedDocument: return "MalformedDocument";
        case Errc::UnsupportedStructure: return "UnsupportedStructure";
        case Errc::PitchOutOfRange: return "PitchOutOfRange";
        case Errc::MissingSymbolClass: return "MissingSymbolClass";
        case Errc::EmptyBank: return "EmptyBank";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::TooFewSamples: return "TooFewSamples";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::EmptyDirectory: return "EmptyDirectory";
        case Errc::ExtractorUnavailable: return "ExtractorUnavailable";
        case Errc::BadConfig: return "BadConfig";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) raise(code, what);
}

}  // namespace scoregen
