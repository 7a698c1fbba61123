#pragma once

#include <stdexcept>
#include <string>

namespace posi {

// Base for every error the library raises. The CLI maps the subclasses onto
// distinct exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: wrong dimensions, out-of-domain arguments, invalid universes.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not deliver the requested accuracy.
class PrecisionError : public Error {
public:
    using Error::Error;
};

/// Rank of a matrix could not be decided (singular values inside the ambiguity band).
class DegeneracyError : public PrecisionError {
public:
    using PrecisionError::PrecisionError;
};

/// An iterative solver hit its iteration cap or a root could not be bracketed.
class NonconvergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace posi
