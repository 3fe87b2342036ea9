#pragma once

#include <stdexcept>
#include <string>

namespace mrisvm {

// Configuration or invalid-argument failures (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data cannot support the requested operation (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical routine failed: singular matrix, non-convergence, etc. (CLI exit code 4).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mrisvm
