#pragma once

#include <stdexcept>
#include <string>

namespace inloop {

// Error taxonomy, mirrored by the CLI exit codes:
//   ConfigError       -> 1  (bad parameters, bad files, bad flags)
//   InstabilityError  -> 2  (feedback loop or optomechanical instability)
//   SingularityError  -> 2  (evaluation at an exact pole of a response function)
//   ConvergenceError  -> 3  (quadrature / root finding failed to converge)

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct InstabilityError : std::runtime_error {
    explicit InstabilityError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace inloop
