#pragma once

#include <stdexcept>
#include <string>

namespace hpvd {

// Coarse error classes; the CLI maps these onto process exit codes.
enum class ErrorCode {
  BadArgument,        // caller violated a precondition
  MissingFile,        // file or directory not found / unreadable
  MalformedManifest,  // JSON present but does not match the schema
  DimsMismatch,       // grids that must share a shape do not
  MissingPhase,       // requested or required phase not available
  NumericDivergence,  // non-finite value where a finite one is required
  IoFailure,          // write/read error other than missing file
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace hpvd
