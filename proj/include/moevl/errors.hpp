#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace moevl {

// Every failure the library can raise derives from Error and carries a short
// machine-readable kind string. The CLI catches Error at the top level and
// prints a single "error: <kind>: <message>" line.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// Tensor extents or ranks do not fit the operation.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

// An index (class id, token id, axis, frame index) is out of range.
class IndexError : public Error {
public:
    explicit IndexError(const std::string& m) : Error("index", m) {}
};

// A configuration value is missing, unknown, unparsable, or out of bounds.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// A documented precondition or invariant was violated by the caller.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& m) : Error("contract", m) {}
};

// A computation produced or received a non-finite value.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

// A serialized file (checkpoint, dataset, frames, observations) is malformed.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& m) : Error("format", m) {}
};

// A named entity (adapter, tensor, file record) does not exist.
class LookupError : public Error {
public:
    explicit LookupError(const std::string& m) : Error("lookup", m) {}
};

// The requested operation is not supported by the configured variant.
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string& m) : Error("capability", m) {}
};

}  // namespace moevl
