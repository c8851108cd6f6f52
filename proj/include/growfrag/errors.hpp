#pragma once

#include <stdexcept>
#include <string>

namespace growfrag {

// Thrown when an argument is outside the documented domain of an operation.
class domain_error : public std::domain_error {
public:
    explicit domain_error(const std::string& what) : std::domain_error(what) {}
};

// Thrown when a numerical procedure fails to meet its tolerance
// (ODE step failure, quadrature non-convergence, iteration divergence).
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Configuration / input-file problems. The CLI maps these to exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace growfrag
