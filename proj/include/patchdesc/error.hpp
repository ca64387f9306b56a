#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace patchdesc {

enum class ErrorKind {
  invalid_shape,
  shape_mismatch,
  cache_mismatch,
  empty_batch,
  dataset_structure,
  format,
  consistency,
  parse,
  sampling_infeasible,
  divergence,
  checkpoint_format,
  degenerate_labels,
  config,
  io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_shape: return "invalid-shape";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::cache_mismatch: return "cache-mismatch";
    case ErrorKind::empty_batch: return "empty-batch";
    case ErrorKind::dataset_structure: return "dataset-structure";
    case ErrorKind::format: return "format";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::parse: return "parse";
    case ErrorKind::sampling_infeasible: return "sampling-infeasible";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::checkpoint_format: return "checkpoint-format";
    case ErrorKind::degenerate_labels: return "degenerate-labels";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace patchdesc
