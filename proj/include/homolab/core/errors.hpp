#pragma once

#include <stdexcept>
#include <string>

namespace homolab {

// Failure classes used across the library. Each maps to one recoverable
// condition; callers that want a nonzero exit catch Error at the top level.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateCorners : Error { using Error::Error; };
struct ProjectiveOverflow : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct ImageTooSmall : Error { using Error::Error; };
struct OverlapUnsatisfiable : Error { using Error::Error; };
struct BadParams : Error { using Error::Error; };
struct EmptyCorpus : Error { using Error::Error; };
struct BadRatios : Error { using Error::Error; };
struct WrongSplit : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace homolab
