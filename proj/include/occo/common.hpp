#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace occo {

/// Bad input data: unreadable files, malformed masks, dimension mismatches.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration: bad option values, mismatched checkpoint configs.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Runtime numerical failure: non-finite losses, degenerate optimizations.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

template <typename... Args>
std::string format_msg(Args&&... args) {
    std::ostringstream oss;
    (oss << ... << args);
    return oss.str();
}

} // namespace detail

} // namespace occo

#define OCCO_CHECK(cond, ...)                                                  \
    do {                                                                       \
        if (!(cond))                                                           \
            throw ::occo::DataError(::occo::detail::format_msg(__VA_ARGS__)); \
    } while (0)

#define OCCO_CHECK_CFG(cond, ...)                                              \
    do {                                                                       \
        if (!(cond))                                                           \
            throw ::occo::ConfigError(::occo::detail::format_msg(__VA_ARGS__)); \
    } while (0)
