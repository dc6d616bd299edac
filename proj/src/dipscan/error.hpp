#pragma once

#include <stdexcept>
#include <string>

namespace dipscan {

// Numeric values are part of the C ABI (see include/dipscan/dipscan.h).
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kDimensionMismatch = 2,
  kNotSymmetric = 3,
  kNotPositiveSemidefinite = 4,
  kOutsideMetricRange = 5,
  kSingularMetric = 6,
  kUpdateSingular = 7,
  kDegenerateCandidate = 8,
  kZeroData = 9,
  kSourceNotIdentifiable = 10,
  kInsufficientSamples = 11,
  kElOretaIndefinite = 12,
  kElOretaNotConverged = 13,
  kNullConstraint = 14,
  kNoSource = 15,
  kDomain = 16,
  kBalancedCase = 17,
  kWhiteningMetric = 18,
  kNoWitness = 19,
  kConfig = 20,
  kIo = 21,
  kInternal = 99,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dipscan
