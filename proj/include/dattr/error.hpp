#pragma once

#include <stdexcept>
#include <string>

namespace dattr {

enum class Errc {
  InvalidArgument,
  DimensionMismatch,
  NonCompliant,
  DegenerateSpan,
  InvalidDelta,
  ZeroDenominator,
  Diverged,
  TooFewSamples,
  ClampUnsupported,
  KeyModelMismatch,
  BadQuality,
  BadMagic,
  TruncatedFile,
  SchemaVersionMismatch,
  CorruptFile,
  Io,
};

const char* errc_name(Errc code) noexcept;

// All library failures are reported as dattr::Error carrying a stable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dattr
