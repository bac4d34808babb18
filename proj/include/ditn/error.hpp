#pragma once

#include <stdexcept>
#include <string>

namespace ditn {

/// Shapes that do not line up: mismatched inner dims, bad channel counts,
/// non-divisible spatial sizes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or unsupported file content (weights, PNG, config).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checksum mismatch in a weight file.
class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// File could not be opened or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ditn
