#include "saferoad/error.hpp"

namespace saferoad {

std::string_view code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::MalformedCsv: return "MALFORMED_CSV";
    case ErrorCode::SchemaMismatch: return "SCHEMA_MISMATCH";
    case ErrorCode::SamplingExhausted: return "SAMPLING_EXHAUSTED";
    case ErrorCode::ProviderQuotaExceeded: return "PROVIDER_QUOTA_EXCEEDED";
    case ErrorCode::NoImageryAtLocation: return "NO_IMAGERY_AT_LOCATION";
    case ErrorCode::NetworkFailure: return "NETWORK_FAILURE";
    case ErrorCode::FixtureMissing: return "FIXTURE_MISSING";
    case ErrorCode::CacheCorrupted: return "CACHE_CORRUPTED";
    case ErrorCode::UnlabeledRecord: return "UNLABELED_RECORD";
    case ErrorCode::UnknownBackbone: return "UNKNOWN_BACKBONE";
    case ErrorCode::SingleClassDataset: return "SINGLE_CLASS_DATASET";
    case ErrorCode::EmptyDataset: return "EMPTY_DATASET";
    case ErrorCode::UndecodableImage: return "UNDECODABLE_IMAGE";
    case ErrorCode::LayerNotFound: return "LAYER_NOT_FOUND";
    case ErrorCode::NonFiniteGradient: return "NON_FINITE_GRADIENT";
    case ErrorCode::DimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::GeometryMismatch: return "GEOMETRY_MISMATCH";
    case ErrorCode::InvalidMask: return "INVALID_MASK";
    case ErrorCode::AdapterUnavailable: return "ADAPTER_UNAVAILABLE";
    case ErrorCode::EmptyInstanceSet: return "EMPTY_INSTANCE_SET";
    case ErrorCode::BackendUnavailable: return "BACKEND_UNAVAILABLE";
    case ErrorCode::BackendTimeout: return "BACKEND_TIMEOUT";
    case ErrorCode::EmptyApMask: return "EMPTY_AP_MASK";
    case ErrorCode::MissingCandidate: return "MISSING_CANDIDATE";
    case ErrorCode::NoScoredSessions: return "NO_SCORED_SESSIONS";
    case ErrorCode::CheckpointMismatch: return "CHECKPOINT_MISMATCH";
    case ErrorCode::NotFound: return "NOT_FOUND";
    case ErrorCode::IllegalTransition: return "ILLEGAL_TRANSITION";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

}  // namespace saferoad
