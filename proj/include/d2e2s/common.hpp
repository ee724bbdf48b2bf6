#pragma once

#include <random>
#include <stdexcept>
#include <string>

namespace d2e2s {

using Rng = std::mt19937_64;

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// corpus
struct MalformedLineError : Error { using Error::Error; };
struct TokenMismatchError : Error { using Error::Error; };
struct CyclicHeadsError : Error { using Error::Error; };
struct MultipleRootsError : Error { using Error::Error; };

// encoder
struct SequenceTooLongError : Error { using Error::Error; };

// training / cli
struct ConfigError : Error { using Error::Error; };
struct NonFiniteLossError : Error { using Error::Error; };
struct UnknownAblationError : Error { using Error::Error; };
struct CheckpointVersionMismatchError : Error { using Error::Error; };
struct OutOfMemoryError : Error { using Error::Error; };
struct NoDataFoundError : Error { using Error::Error; };

// evaluation
struct IdMismatchError : Error { using Error::Error; };

}  // namespace d2e2s
