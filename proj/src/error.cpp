#include "drugcomb/error.hpp"

namespace drugcomb {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownDrug: return "UnknownDrug";
    case ErrorCode::EmptyRegimen: return "EmptyRegimen";
    case ErrorCode::DuplicateDrug: return "DuplicateDrug";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::InvalidDictionary: return "InvalidDictionary";
    case ErrorCode::NoRepresentatives: return "NoRepresentatives";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::SingularPrecision: return "SingularPrecision";
    case ErrorCode::NonPDScale: return "NonPDScale";
    case ErrorCode::PoolTooSmall: return "PoolTooSmall";
    case ErrorCode::EmptyChain: return "EmptyChain";
    case ErrorCode::LabelMatchFailure: return "LabelMatchFailure";
    case ErrorCode::UnknownIndividual: return "UnknownIndividual";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) +
                         (detail.empty() ? "" : ": " + detail)),
      code_(code),
      detail_(std::move(detail)) {}

}  // namespace drugcomb
