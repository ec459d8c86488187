#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drugcomb {

enum class ErrorCode {
  UnknownDrug,
  EmptyRegimen,
  DuplicateDrug,
  EmptyHistory,
  InvalidDictionary,
  NoRepresentatives,
  DimensionMismatch,
  InvalidArgument,
  NonFiniteLikelihood,
  SingularPrecision,
  NonPDScale,
  PoolTooSmall,
  EmptyChain,
  LabelMatchFailure,
  UnknownIndividual,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports. `detail` carries the offending value
// (a drug code, an individual id, ...) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace drugcomb
