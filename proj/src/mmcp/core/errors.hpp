#pragma once

#include <stdexcept>
#include <string>

namespace mmcp {

// File or payload does not match its manifest (wrong magic, shapes, byte counts).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Pose or index outside the valid region.
class OutOfBoundsError : public std::runtime_error {
 public:
  explicit OutOfBoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmcp
