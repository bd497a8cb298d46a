#pragma once

#include <stdexcept>
#include <string>

namespace hetcav {

/// Invalid input: bad geometry, bad config, violated precondition.
/// The CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A solver could not produce a result (instability, no mode found, ...).
/// The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hetcav
