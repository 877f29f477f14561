#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdnn {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t row, const std::string& what)
        : std::runtime_error("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Raised when two routes that must agree (e.g. an explicit Hessian and its
// circulant structure) do not.
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t epoch, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
          epoch_(epoch) {}
    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace cdnn
