#pragma once

#include <stdexcept>
#include <string>

namespace a2rl {

/// A caller broke a documented precondition (stepping a finished episode,
/// mismatched tensor shapes, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or unsupported input file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint was written by an incompatible build or configuration.
class CheckpointMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class NumericAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) {
        throw ContractViolation(what);
    }
}

}  // namespace detail
}  // namespace a2rl
