#include "segqual/error.hpp"

namespace segqual {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadVersion: return "BadVersion";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::InvalidProbability: return "InvalidProbability";
        case ErrorCode::InvalidLabel: return "InvalidLabel";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::ContainsIgnoreLabel: return "ContainsIgnoreLabel";
        case ErrorCode::EmptyRegion: return "EmptyRegion";
        case ErrorCode::EmptyInterior: return "EmptyInterior";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::BinTooSmall: return "BinTooSmall";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::NoValidationSet: return "NoValidationSet";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::BlobOutOfBounds: return "BlobOutOfBounds";
        case ErrorCode::MissingValue: return "MissingValue";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace segqual
