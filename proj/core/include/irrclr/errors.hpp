#pragma once

#include <stdexcept>
#include <string>

namespace irrclr {

// Validation errors are caller mistakes (bad arguments, malformed files,
// broken invariants); runtime errors are failures of an otherwise valid
// run (diverged loss, corrupt artifacts). The CLI maps them to exit codes
// 1 and 2 respectively.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class RuntimeFailure : public std::runtime_error {
public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace irrclr
