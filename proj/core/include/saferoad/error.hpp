#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace saferoad {

// Stable error codes. The upper-snake names returned by code_name() are part
// of the CLI and HTTP contracts and must not change.
enum class ErrorCode {
  InvalidArgument,
  MalformedCsv,
  SchemaMismatch,
  SamplingExhausted,
  ProviderQuotaExceeded,
  NoImageryAtLocation,
  NetworkFailure,
  FixtureMissing,
  CacheCorrupted,
  UnlabeledRecord,
  UnknownBackbone,
  SingleClassDataset,
  EmptyDataset,
  UndecodableImage,
  LayerNotFound,
  NonFiniteGradient,
  DimensionMismatch,
  GeometryMismatch,
  InvalidMask,
  AdapterUnavailable,
  EmptyInstanceSet,
  BackendUnavailable,
  BackendTimeout,
  EmptyApMask,
  MissingCandidate,
  NoScoredSessions,
  CheckpointMismatch,
  NotFound,
  IllegalTransition,
  IoError,
};

std::string_view code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace saferoad
