#ifndef SILAB_ERROR_HPP
#define SILAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace silab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid spec, schedule, shape or option. Exit code 2 at the CLI.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file (IDX, checkpoint, CSV).
class IngestionError : public Error {
public:
    using Error::Error;
};

/// A projected step whose pre-projection vector has zero norm.
class DegenerateStepError : public Error {
public:
    using Error::Error;
};

/// A quantity that is undefined at the current point (zero-norm group, ...).
class DiagnosticError : public Error {
public:
    using Error::Error;
};

} // namespace silab

#endif
