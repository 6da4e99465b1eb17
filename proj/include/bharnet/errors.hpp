#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace bharnet {

// Error taxonomy shared across the library. The CLI maps each category to a
// stable exit code and a one-line "error:<category>: ..." message.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const { return category_; }

private:
    std::string category_;
};

// Bad inputs: shape mismatches, out-of-range labels, malformed datasets.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

// Runtime numeric failures: non-finite losses, underflowed normalizers.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

// File-system and serialization failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("io", what) {}
};

// Malformed run configuration (CLI / JSON config files).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace bharnet
