#pragma once

#include <stdexcept>
#include <string>

namespace atlas {

// Bad input: malformed files, violated preconditions, inconsistent
// configuration. The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Failure while executing otherwise valid work (I/O, diverging training,
// a failed tile). The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace atlas
