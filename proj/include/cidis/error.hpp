#pragma once

#include <stdexcept>
#include <string>

namespace cidis {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or extent disagreement between tensors/layers.
struct ShapeError : Error {
    using Error::Error;
};

// Scalar argument outside its allowed range (lo >= hi, bad dropout rate, day
// outside the ripening schedule, ...).
struct RangeError : Error {
    using Error::Error;
};

// Malformed or truncated binary payload.
struct CorruptDataError : Error {
    using Error::Error;
};

// API misuse: stale cache, missing gradient, unsplit dataset.
struct ContractError : Error {
    using Error::Error;
};

// Class label outside {0..3}.
struct LabelError : Error {
    using Error::Error;
};

// Bad magic, version or truncation in a checkpoint file.
struct FormatError : Error {
    using Error::Error;
};

// Checkpoint belongs to a different layer manifest.
struct ArchMismatchError : Error {
    using Error::Error;
};

// Invalid scene/run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem trouble.
struct IoError : Error {
    using Error::Error;
};

// Non-finite loss during training; message names epoch and batch.
struct DivergenceError : Error {
    using Error::Error;
};

// Evaluation over an empty subset.
struct EvalError : Error {
    using Error::Error;
};

}  // namespace cidis
