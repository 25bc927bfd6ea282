#pragma once

#include <stdexcept>
#include <string>

namespace groupdet {

// Error taxonomy, mapped to CLI exit codes in tools/groupdet.cpp:
//   config_error -> 2, data_error -> 3, numeric_error -> 4.
// dim_error / index_error / validation_error are programming-contract
// violations and surface as ordinary failures (exit 1) if they escape.

struct dim_error : std::invalid_argument {
  explicit dim_error(const std::string& msg) : std::invalid_argument(msg) {}
};

struct index_error : std::out_of_range {
  explicit index_error(const std::string& msg) : std::out_of_range(msg) {}
};

struct validation_error : std::invalid_argument {
  explicit validation_error(const std::string& msg) : std::invalid_argument(msg) {}
};

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct data_error : std::runtime_error {
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when an op produces NaN/Inf; the training step aborts instead of
// propagating poisoned values.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace groupdet
