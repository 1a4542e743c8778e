#pragma once

#include <stdexcept>
#include <string>

namespace recon {

/// Malformed or inconsistent input data (bad file, invalid stream, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A volume operation broke the integrate/de-integrate contract, e.g.
/// de-integrating an observation that was never integrated.
struct ProtocolViolation : std::runtime_error {
    explicit ProtocolViolation(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid command usage (bad flag combination and the like).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace recon
