#include "rfpca/errors.hpp"

namespace rfpca {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoLocalData: return "NoLocalData";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::InsufficientPairings: return "InsufficientPairings";
    case ErrorCode::NoPositiveSpectrum: return "NoPositiveSpectrum";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::NoCleanCurves: return "NoCleanCurves";
    case ErrorCode::DegenerateRanks: return "DegenerateRanks";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::DuplicateTime: return "DuplicateTime";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

}  // namespace rfpca
