#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spikelab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

// File/container parsing failure; carries the byte offset where it was detected.
struct FormatError : Error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t at)
        : Error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
};

struct DecompositionError : Error {
    using Error::Error;
};

struct ZeroVarianceError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DependencyError : Error {
    using Error::Error;
};

}  // namespace spikelab
