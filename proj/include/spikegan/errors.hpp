#pragma once

#include <stdexcept>
#include <string>

namespace spikegan {

// Error taxonomy mirrors the CLI exit-code contract:
//   config/contract problems -> 1, data/file problems -> 2,
//   training divergence -> 3, metric sanity gate -> 4.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CheckpointError : DataError {
    using DataError::DataError;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure inside an iterative solver (e.g. Jacobi sweeps
// exhausted); carries diagnostics in the message.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricGateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace spikegan
