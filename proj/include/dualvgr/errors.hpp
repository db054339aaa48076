#pragma once

#include <stdexcept>
#include <string>

namespace dualvgr {

// Bad model/run configuration (dimension mismatches, invalid step counts, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// On-disk dataset is inconsistent or truncated.
struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint cannot be loaded or does not match the target model/dataset.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dualvgr
