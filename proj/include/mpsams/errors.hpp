#pragma once

#include <stdexcept>
#include <string>

namespace mpsams {

// Error taxonomy mirrors the CLI exit codes: config 2, data 3, training 4, io 5.
// Contract violations on operation inputs throw InvalidInput.

struct InvalidInput : std::invalid_argument {
    explicit InvalidInput(const std::string& msg) : std::invalid_argument(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when two non-empty clusters cannot be formed even after retries.
struct ClusteringDegenerate : std::runtime_error {
    explicit ClusteringDegenerate(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mpsams
