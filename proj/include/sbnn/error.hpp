#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sbnn {

/// Shape or length disagreement between arguments.
class SizeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (beta == 0, gamma >= 1, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed encoded payload or container. Carries the bit offset at which decoding failed.
class CorruptStream : public std::runtime_error {
public:
    CorruptStream(const std::string& what, std::size_t bit_position)
        : std::runtime_error(what + " (at bit " + std::to_string(bit_position) + ")"),
          position_(bit_position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Dataset ingestion failure.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sbnn
