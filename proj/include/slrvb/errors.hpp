#ifndef SLRVB_ERRORS_HPP
#define SLRVB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace slrvb {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point lies outside the support of its family.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A natural-parameter vector does not define a normalizable density.
class ValidityError : public Error {
 public:
  using Error::Error;
};

/// Factorization or other numerical failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A conditional q(x_i | x_pa) evaluated to an invalid natural-parameter vector.
class InvalidConditional : public Error {
 public:
  InvalidConditional(std::string block, const std::string& what)
      : Error("invalid conditional for block '" + block + "': " + what), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

class UnsupportedPrior : public Error {
 public:
  using Error::Error;
};

class UnsupportedEstimator : public Error {
 public:
  using Error::Error;
};

/// Linear system for a block stayed singular after ridge and jitter escalation.
class ConditioningError : public NumericError {
 public:
  ConditioningError(std::string block, const std::string& what)
      : NumericError("conditioning failure in block '" + block + "': " + what), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

 private:
  std::string block_;
};

class LineSearchError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Zero variance of log p under q; R^2 is undefined.
class UndefinedQuality : public Error {
 public:
  using Error::Error;
};

/// Document or CSV does not match the expected layout or version.
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace slrvb

#endif  // SLRVB_ERRORS_HPP
