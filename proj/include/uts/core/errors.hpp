#pragma once

#include <stdexcept>
#include <string>

namespace uts {

// Exit-code mapping used by the CLI: ConfigError -> 2, TrainError -> 3,
// VerifyError -> 4, anything else -> 1.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VerifyError : std::runtime_error {
    explicit VerifyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uts
