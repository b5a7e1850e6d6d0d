#pragma once

#include <stdexcept>
#include <string>

namespace upcg {

// Failure classes. The CLI maps these onto process exit codes.
enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kParse,
  kCorruptStream,
  kTruncated,
  kBadMagic,
  kBadVersion,
  kLengthMismatch,
  kModelMismatch,
  kUnsupported,
  kNumeric,
};

const char* errorCodeName(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(what), _code(code)
  {}

  ErrorCode code() const { return _code; }

private:
  ErrorCode _code;
};

[[noreturn]] inline void
fail(ErrorCode code, const std::string& what)
{
  throw Error(code, what);
}

}  // namespace upcg
