// SPDX-License-Identifier: Apache-2.0

#include "mvl/errors.hpp"

namespace mvl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kContract: return "contract error";
    case ErrorKind::kVocabulary: return "vocabulary error";
    case ErrorKind::kEmptySupervision: return "empty-supervision error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kUnsupportedModality: return "unsupported-modality error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kContextOverflow: return "context-overflow error";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kCapacity: return "capacity error";
    case ErrorKind::kCheckpointFormat: return "checkpoint-format error";
    case ErrorKind::kEmptyEval: return "empty-eval error";
    case ErrorKind::kNonFinite: return "non-finite error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace mvl
