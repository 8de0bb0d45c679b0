#pragma once

#include <stdexcept>
#include <string>

namespace apsim {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMeasurement : public Error {
public:
    using Error::Error;
};

class InvalidAnnouncement : public Error {
public:
    using Error::Error;
};

class SequencingError : public Error {
public:
    using Error::Error;
};

class NoSteadyState : public Error {
public:
    using Error::Error;
};

/// Non-finite state after an integration step.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class SamplingExhausted : public Error {
public:
    using Error::Error;
};

class BracketFailure : public Error {
public:
    using Error::Error;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

/// Bad configuration: unknown key, unparsable value or violated invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace apsim
