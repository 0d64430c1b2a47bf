#pragma once

#include <stdexcept>
#include <string>

namespace volres {

// Every failure the library reports carries one of these kinds so callers
// (and the CLI exit-code mapping) can react without string matching.
enum class ErrorKind {
  kDimension,   // shape/extent mismatch between tensors
  kDtype,       // mixed f32/f64 arithmetic, never silently cast
  kParse,       // unreadable token in a text format
  kFormat,      // structural damage in a binary or text container
  kIndex,       // out-of-range index (face index, label, ...)
  kGeometry,    // degenerate or out-of-domain mesh
  kSpec,        // violated structural contract (fingerprint, rotation axis)
  kConfig,      // invalid configuration value or unknown key
  kData,        // empty split, missing cache, degenerate batch
  kDivergence,  // non-finite loss during training
  kState,       // op misuse, e.g. backward without a fresh forward
  kIo,          // filesystem failure
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace volres
