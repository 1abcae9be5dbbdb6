#pragma once

#include <stdexcept>
#include <string>

namespace derender {

/// Error raised by every module. `module()` names the subsystem that failed
/// so front ends (CLI, HTTP service) can report where a request broke.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Thrown by decompose when no pixel of a layer has enough coverage to be
/// inverted.
class NotObservableError : public Error {
 public:
  explicit NotObservableError(const std::string& message) : Error("decompose", message) {}
};

}  // namespace derender
