#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coachai {

enum class ErrorKind {
    domain,          // value outside the operation's domain
    not_found,
    invalid_plan,
    parse,
    conflict,
    precondition,
    invalid_state,
    routing,
    transport,       // retryable
    stale_write,
    training,
    stratification,
    missing_feature,
    coercion,
    instrument,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (the HTTP
// layer, the CLI) can map it without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Dialog DSL failures carry the source location.
class ParseError : public Error {
public:
    ParseError(int line, int column, const std::string& message)
        : Error(ErrorKind::parse, "line " + std::to_string(line) + ", column " +
                                      std::to_string(column) + ": " + message),
          line_(line), column_(column), message_(message) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& message() const noexcept { return message_; }

private:
    int line_;
    int column_;
    std::string message_;
};

}  // namespace coachai
