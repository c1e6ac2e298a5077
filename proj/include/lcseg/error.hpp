#pragma once

#include <stdexcept>
#include <string>

namespace lcseg {

/// Base of all library errors. The category drives the CLI exit code.
class Error : public std::runtime_error {
public:
    enum class Category { Config = 1, Data = 2, Numeric = 3 };

    Error(Category category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

/// Invalid parameters, manifests or preconditions on user-supplied settings.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(Category::Config, what) {}
};

/// Unreadable, malformed or inconsistent input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(Category::Data, what) {}
};

/// Degenerate or divergent numerical computation.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(Category::Numeric, what) {}
};

}  // namespace lcseg
