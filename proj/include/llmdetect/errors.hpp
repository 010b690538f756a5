#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace llmdetect {

/// Bad or inconsistent input data (maps to CLI exit code 2).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A data error tied to a physical line of an input file.
class ParseError : public DataError {
public:
    ParseError(std::string path, std::size_t line, const std::string& message)
        : DataError(path + ":" + std::to_string(line) + ": " + message),
          path_(std::move(path)),
          line_(line) {}

    const std::string& path() const noexcept { return path_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string path_;
    std::size_t line_;
};

/// Invalid configuration or arguments (maps to CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace llmdetect
