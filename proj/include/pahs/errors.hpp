#ifndef PAHS_ERRORS_HPP
#define PAHS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pahs {

// Shape/contract violations map to CLI exit code 2, I/O failures to 3.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pahs

#endif
