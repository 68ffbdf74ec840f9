#pragma once

#include <stdexcept>
#include <string>

namespace hfw {

// Error taxonomy shared by the whole library. The CLI maps these to stable
// exit codes: config/schema -> 2, numerical -> 3, data -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

struct NumericalError : Error {
    using Error::Error;
};

struct StateError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace hfw
