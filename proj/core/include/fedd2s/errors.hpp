#pragma once

#include <stdexcept>
#include <string>

namespace fedd2s {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument value (out-of-range index, non-positive temperature, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Model/input shapes or run settings that do not fit together.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// API called in the wrong order, e.g. backward without a recorded forward.
class UsageError : public Error {
public:
    using Error::Error;
};

class PartitionError : public Error {
public:
    using Error::Error;
};

/// Malformed dataset file. The message carries the byte offset or row/column.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Knowledge exchanged between parties does not match the architecture.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace fedd2s
