#pragma once

#include <stdexcept>
#include <string>

namespace nrc {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kDivergence = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Invalid parameters or command-line usage.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

// Malformed or inconsistent input data (files, shapes, dimensions).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

// Non-finite values produced by a numerical iteration.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ExitCode::kDivergence, what) {}
};

}  // namespace nrc
