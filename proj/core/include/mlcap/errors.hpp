#pragma once

#include <stdexcept>
#include <string>

namespace mlcap {

/// Precondition or usage-contract violation (empty inputs, invalid config).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Shapes of tensor operands or parameter arrays disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Token id or class index outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Malformed input data: dataset files, checkpoints, candidate files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mlcap
