#pragma once

#include <stdexcept>
#include <string>

namespace logohall {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  Ok = 0,
  Config = 2,
  Upstream = 3,
  Invariant = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

// Malformed input files, bad flags, impossible requests.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::Config, what) {}
};

// Transport, auth and response-format failures from a model endpoint.
class UpstreamError : public Error {
 public:
  explicit UpstreamError(const std::string& what) : Error(ExitCode::Upstream, what) {}
};

// A domain invariant does not hold (bad record, bad mask, non-finite data).
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ExitCode::Invariant, what) {}
};

}  // namespace logohall
