#ifndef PROJCGAN_ERRORS_HPP
#define PROJCGAN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace projcgan {

// Shape or extent disagreement between operands.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Argument outside its documented domain (lambda out of [0,1], lo > hi, ...).
struct ValueError : std::invalid_argument {
    explicit ValueError(const std::string& what) : std::invalid_argument(what) {}
};

// File format or filesystem failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss; the run is aborted rather than
// silently propagating NaNs.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated an API contract (e.g. backward on a non-scalar loss).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace projcgan

#endif
