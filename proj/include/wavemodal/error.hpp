#pragma once

#include <stdexcept>
#include <string>

namespace wavemodal {

/// Bad input: malformed data, inconsistent dimensions, parameters out of range.
/// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation could not produce a trustworthy result (non-convergence,
/// singular systems, unstable dynamics). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace wavemodal
