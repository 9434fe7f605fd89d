#ifndef GGDA_ERRORS_HPP
#define GGDA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ggda {

// Numerical failures (CLI exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotSPD : NumericalError {
    using NumericalError::NumericalError;
};

struct Divergence : NumericalError {
    using NumericalError::NumericalError;
};

struct NonFiniteLoss : NumericalError {
    using NumericalError::NumericalError;
};

struct TooLarge : NumericalError {
    using NumericalError::NumericalError;
};

// File and schema failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, long row, long col)
        : std::runtime_error(what + " (row " + std::to_string(row) +
                             ", column " + std::to_string(col) + ")"),
          row(row), col(col) {}
    long row;
    long col;
};

struct MissingColumn : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration (CLI exit code 2). `field` is the dotted path of the
// offending config entry, e.g. "dataset.path".
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field(field) {}
    std::string field;
};

}  // namespace ggda

#endif
