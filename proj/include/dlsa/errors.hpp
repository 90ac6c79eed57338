#ifndef DLSA_ERRORS_HPP
#define DLSA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dlsa {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct LabelError : Error {
    using Error::Error;
};

struct DimensionalityError : Error {
    using Error::Error;
};

struct InsufficientSamplesError : Error {
    using Error::Error;
};

struct DegenerateVarianceError : Error {
    using Error::Error;
};

struct DegenerateSlopeError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct EvaluationError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

}  // namespace dlsa

#endif  // DLSA_ERRORS_HPP
