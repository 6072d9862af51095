#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace infomatch {

// Malformed input files (dataset binaries, CSV, checkpoints).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values or unsatisfiable run setups.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke an API precondition (shape mismatch etc.).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

}  // namespace infomatch
