#pragma once

#include <stdexcept>
#include <string>

namespace copydet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// imaging
struct UnsupportedFormat : Error { using Error::Error; };
struct CorruptStream : Error { using Error::Error; };
struct UnsupportedChannels : Error { using Error::Error; };
struct DegenerateImage : Error { using Error::Error; };
struct BoxOutOfBounds : Error { using Error::Error; };
struct ParamOutOfRange : Error { using Error::Error; };

// csv / ground truth
struct MalformedRow : Error { using Error::Error; };
struct NegativeDimension : Error { using Error::Error; };
struct EmptyGroundTruth : Error { using Error::Error; };
struct DuplicatePair : Error { using Error::Error; };

// index
struct EmptyCorpus : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct TooFewVectors : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };

// global branch
struct EmptyStore : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };
struct NegativeDistance : Error { using Error::Error; };
struct NoValidTriplets : Error { using Error::Error; };
struct DivergedLoss : Error { using Error::Error; };
struct CapacityTooSmall : Error { using Error::Error; };

// cli
struct NoImagesFound : Error { using Error::Error; };
struct MissingIndex : Error { using Error::Error; };
struct MissingEmbeddings : Error { using Error::Error; };

} // namespace copydet
