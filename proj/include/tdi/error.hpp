#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tdi {

enum class ErrorKind {
  // panel-core
  InvalidPanel,
  ShapeMismatch,
  IncompleteEstimate,
  // ingest
  Io,
  MalformedRow,
  UnknownVariable,
  NonFiniteValue,
  EmptyCohort,
  // imputers / fusion
  AllMissingColumn,
  SingularSystem,
  DomainError,
  // metrics / predict
  EmptyInput,
  ZeroRange,
  SingleClass,
  NonFiniteFeature,
  InsufficientObservations,
  FoldDegenerate,
  // cli
  Config,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure in the library is reported through this type; `kind()`
/// lets callers (the CLI in particular) branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tdi
