#pragma once

#include <stdexcept>
#include <string>

namespace svstitch {

enum class ErrorKind {
  InvalidArgument,
  InvalidConfig,
  SingularConfiguration,
  DegenerateWarp,
  DegenerateChain,
  NoOverlap,
  OptimizationFailed,
  LoadError,
  InvalidSpec,
};

const char* to_string(ErrorKind kind);

// All library failures surface as this exception; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace svstitch
