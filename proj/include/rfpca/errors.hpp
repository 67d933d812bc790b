#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rfpca {

enum class ErrorCode {
  InvalidArgument,
  NoLocalData,
  DegenerateScale,
  NoConvergence,
  SingularDesign,
  AllMissing,
  InsufficientPairings,
  NoPositiveSpectrum,
  SingularSystem,
  AllCandidatesFailed,
  NoCleanCurves,
  DegenerateRanks,
  ParseError,
  EmptyFile,
  DuplicateTime,
  MissingArtifact,
  SchemaMismatch,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable error code. Numerical degeneracies
/// that have a well-defined fallback value are reported through result flags
/// instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rfpca
