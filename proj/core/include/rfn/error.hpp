#pragma once

#include <stdexcept>
#include <string>

namespace rfn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up (channel mismatch, odd spatial size, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or missing prerequisite (e.g. stage-1 checkpoint).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller supplied an input that violates a precondition (size, range, pairing).
class InputError : public Error {
public:
    using Error::Error;
};

/// Image or corpus could not be ingested (undecodable file, orphan in a pair set).
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Malformed checkpoint file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or failed numerical routine (e.g. SVD).
class NumericError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. asking for a gradient of a non-scalar output.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace rfn
