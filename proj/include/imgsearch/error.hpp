#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imgsearch {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (XML, JSONL, images). Carries a byte offset when known.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t offset = npos)
        : Error(what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::size_t offset_;
};

/// Caller supplied an argument outside the operation's contract.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Network failure. `status` is the HTTP status, or 0 for connection-level errors.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status, bool retryable)
        : Error(what), status_(status), retryable_(retryable) {}

    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return retryable_; }

private:
    int status_;
    bool retryable_;
};

class DecodeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace imgsearch
