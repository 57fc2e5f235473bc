#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coevolve {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed grammar source.
class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, std::size_t col, std::string expected, std::string message);

    std::size_t line() const noexcept { return line_; }
    std::size_t col() const noexcept { return col_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t line_;
    std::size_t col_;
    std::string expected_;
};

/// Grammar-language syntax outside the supported subset.
class UnsupportedConstruct : public Error {
public:
    UnsupportedConstruct(std::size_t line, std::string construct);

    std::size_t line() const noexcept { return line_; }
    const std::string& construct() const noexcept { return construct_; }

private:
    std::size_t line_;
    std::string construct_;
};

/// A grammar whose semantic invariants do not hold (duplicate rules, dangling references).
class GrammarError : public Error {
public:
    using Error::Error;
};

/// Instance text containing characters that no terminal matches.
class LexError : public Error {
public:
    LexError(std::size_t line, std::size_t col, std::string message);

    std::size_t line() const noexcept { return line_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t line_;
    std::size_t col_;
};

}  // namespace coevolve
