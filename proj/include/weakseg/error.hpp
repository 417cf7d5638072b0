#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace weakseg {

enum class ErrorCode {
  InvalidArgument,
  MalformedHeader,
  SizeMismatch,
  NonFiniteVoxel,
  IoFailure,
  IndexOutOfRange,
  EmptySlice,
  UnknownRegionId,
  DimMismatch,
  VolumeIdMismatch,
  InvalidConfig,
  BadInputShape,
  StaleCache,
  NoForeground,
  NoBackground,
  PatchLargerThanSlice,
  TooFewVolumes,
  MalformedVolume,
  NotFound,
  NotLeasedToYou,
  AlreadySubmitted,
  ValidationFailed,
  FlagError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure surfaced by the library carries one of the codes above so the
// CLI and the HTTP layer can map it to a stable machine-readable name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace weakseg
