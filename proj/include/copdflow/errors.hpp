#pragma once

#include <stdexcept>
#include <string>

namespace copdflow {

/// Shape or rank disagreement between tensors / layers.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// Mathematical domain violation (log of non-positive, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

/// API contract violation (stale cache, label out of range, untrained state, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

/// Malformed input file (PGM header, manifest CSV, checkpoint, config).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

/// Filesystem-level failure; message carries the path.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

/// Bad or inconsistent pipeline configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

/// The environment cannot sustain the requested run (e.g. solver convergence
/// failure rate above threshold, signalling a mis-set SimConfig).
struct EnvironmentError : std::runtime_error {
    explicit EnvironmentError(const std::string& msg) : std::runtime_error("environment error: " + msg) {}
};

/// Training produced a non-finite loss.
struct TrainingDivergedError : std::runtime_error {
    long step;
    explicit TrainingDivergedError(long step_, const std::string& msg)
        : std::runtime_error("training diverged at step " + std::to_string(step_) + ": " + msg),
          step(step_) {}
};

/// A required upstream artifact (checkpoint, manifest) is missing or corrupt.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg)
        : std::runtime_error("missing artifact: " + msg) {}
};

/// Evaluation or training was handed an empty input set.
struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& msg) : std::runtime_error("empty input: " + msg) {}
};

/// A converged flow field carries no usable signal (all-zero velocity).
struct DegenerateSampleError : std::runtime_error {
    explicit DegenerateSampleError(const std::string& msg)
        : std::runtime_error("degenerate sample: " + msg) {}
};

}  // namespace copdflow
