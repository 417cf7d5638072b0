#include "weakseg/error.hpp"

namespace weakseg {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteVoxel: return "NonFiniteVoxel";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptySlice: return "EmptySlice";
    case ErrorCode::UnknownRegionId: return "UnknownRegionId";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::VolumeIdMismatch: return "VolumeIdMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::BadInputShape: return "BadInputShape";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::NoForeground: return "NoForeground";
    case ErrorCode::NoBackground: return "NoBackground";
    case ErrorCode::PatchLargerThanSlice: return "PatchLargerThanSlice";
    case ErrorCode::TooFewVolumes: return "TooFewVolumes";
    case ErrorCode::MalformedVolume: return "MalformedVolume";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::NotLeasedToYou: return "NotLeasedToYou";
    case ErrorCode::AlreadySubmitted: return "AlreadySubmitted";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::FlagError: return "FlagError";
  }
  return "Unknown";
}

}  // namespace weakseg
