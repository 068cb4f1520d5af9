#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ocad {

// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between tensors / layer specs.
struct DimensionError : Error {
    using Error::Error;
};

// Invalid configuration values (epochs < 1, threshold out of range, ...).
struct ConfigError : Error {
    using Error::Error;
};

// CSV / file content problems, addressed by 1-based line number.
struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

struct IoError : Error {
    using Error::Error;
};

// Model file carries an unsupported format version.
struct VersionError : Error {
    using Error::Error;
};

// Model file is truncated or structurally invalid.
struct CorruptFileError : Error {
    using Error::Error;
};

// Model was trained on different data than the one presented.
struct FingerprintError : Error {
    using Error::Error;
};

// Normal equations not solvable; caller should use a ridge penalty > 0.
struct SingularSystemError : Error {
    using Error::Error;
};

}  // namespace ocad
