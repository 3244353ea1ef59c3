#pragma once

#include <stdexcept>
#include <string>

namespace flexpe {

// Root of everything the library throws. The CLI maps the subclasses onto
// exit codes, so keep the split meaningful.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand formats or lane layouts disagree.
class ContractError : public Error {
public:
    using Error::Error;
};

// Input outside a CORDIC convergence region.
class RangeError : public Error {
public:
    using Error::Error;
};

// Illegal PE / array configuration (e.g. softmax at FxP4).
class ConfigError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

}  // namespace flexpe
