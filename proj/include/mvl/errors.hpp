// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvl {

enum class ErrorKind {
  kDimension,
  kContract,
  kVocabulary,
  kEmptySupervision,
  kSchema,
  kUnsupportedModality,
  kShape,
  kFormat,
  kContextOverflow,
  kIo,
  kConfig,
  kCapacity,
  kCheckpointFormat,
  kEmptyEval,
  kNonFinite,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mvl
