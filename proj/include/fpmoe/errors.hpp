#pragma once

#include <stdexcept>
#include <string>

namespace fpmoe {

// Base of every error the library throws. The CLI maps IoError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition or API contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not agree.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Index outside its valid range (token ids, targets).
class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

// NaN or Inf observed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Language tag not in the known set.
class TagError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Donor checkpoint does not fit an expert slot.
class AssemblyError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Code { BadMagic, VersionMismatch, ShapeMismatch, Truncated, KindMismatch, BadMetadata };

  CheckpointError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace fpmoe
