#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scribe {

enum class ErrorKind {
  MalformedElf,
  UnsupportedTarget,
  NoHeaderRoom,
  AddressSpaceExhausted,
  SchemaError,
  EmptyMetadata,
  ParseFailure,
  OverlapError,
  ZeroSizeVar,
  UndeclaredPinnedVar,
  RedeclaredPinnedVar,
  UnresolvedSymbol,
  RelocOverflow,
  UnsupportedRelocation,
  FunctionTooSmall,
  PlacementMismatch,
  AlreadyPatched,
  CompilerInvocationFailed,
  ToolchainFailed,
  LayoutInfeasible,
  VerifyCommandMissing,
  ConfigError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &msg) {
  throw Error(kind, msg);
}

} // namespace scribe
