#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dtx {

/// A row or header in an input file that does not match its schema.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string file, std::size_t line, std::string column, const std::string& message)
        : std::runtime_error(file + ":" + std::to_string(line) +
                             (column.empty() ? "" : " [" + column + "]") + ": " + message),
          file_(std::move(file)), line_(line), column_(std::move(column)) {}

    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }
    const std::string& column() const { return column_; }

private:
    std::string file_;
    std::size_t line_;
    std::string column_;
};

/// Data that cannot support the requested computation (one class only, zero variance, ...).
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dtx
