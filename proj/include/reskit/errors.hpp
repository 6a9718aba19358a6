#pragma once

#include <stdexcept>
#include <string>

namespace reskit {

// Input that violates an operation's preconditions. Maps to CLI exit code 2.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A numerical routine failed in a way that signals a bug or a degenerate
// problem (no admissible root, degenerate geometry). Maps to exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace reskit
