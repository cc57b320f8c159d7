#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace evomcts {

// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller passed a value outside the operation's contract (non-finite score,
// reward outside [0,1], empty message list, ...).
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// A node id that is not present in the tree.
class MissingNodeError : public Error {
public:
    using Error::Error;
};

// An internal precondition that upstream code must guarantee was violated
// (e.g. a cyclic graph handed to a DAG-only routine).
class ContractViolationError : public Error {
public:
    using Error::Error;
};

// Model output that does not contain a well-formed structured block.
class ParseError : public Error {
public:
    using Error::Error;
};

// Structured block parsed but violates a value constraint
// (weight sum, empty evolved prompt, dangling memory reference, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Network-level failure. Retryable ones (connect failures, timeouts,
// HTTP 429/5xx) go through the backoff schedule; permanent HTTP client
// errors are surfaced immediately.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& what, int http_status = 0,
                            bool retryable = true)
        : Error(what), http_status(http_status), retryable(retryable) {}
    int http_status;
    bool retryable;
};

// HTTP 2xx response whose body does not follow the chat-completions shape.
class ProtocolError : public Error {
public:
    using Error::Error;
};

// Judge (or pointwise scorer, or memory optimizer) kept returning
// unparseable output; carries every raw attempt for diagnosis.
class JudgeFailureError : public Error {
public:
    JudgeFailureError(const std::string& what, std::vector<std::string> attempts)
        : Error(what), attempts(std::move(attempts)) {}
    std::vector<std::string> attempts;
};

// Scripted backend misconfiguration: queue exhausted or missing tag entry.
class ScriptError : public Error {
public:
    using Error::Error;
};

// Library file failed its integrity check.
class CorruptionError : public Error {
public:
    using Error::Error;
};

// Run configuration problem; message names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace evomcts
