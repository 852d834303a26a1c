#pragma once

#include <stdexcept>
#include <string>

namespace ripple {

// Base for all library failures. Runtime problems (divergence, missing files,
// bad data) use this type directly.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition on caller-supplied input.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ripple
