#include "dipscan/error.hpp"

namespace dipscan {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNotSymmetric: return "matrix not symmetric";
    case ErrorCode::kNotPositiveSemidefinite: return "matrix not positive semidefinite";
    case ErrorCode::kOutsideMetricRange: return "outside metric range";
    case ErrorCode::kSingularMetric: return "singular metric";
    case ErrorCode::kUpdateSingular: return "update singular";
    case ErrorCode::kDegenerateCandidate: return "degenerate candidate";
    case ErrorCode::kZeroData: return "zero data";
    case ErrorCode::kSourceNotIdentifiable: return "source direction not identifiable";
    case ErrorCode::kInsufficientSamples: return "insufficient samples for full-rank covariance";
    case ErrorCode::kElOretaIndefinite: return "eLORETA iterate indefinite";
    case ErrorCode::kElOretaNotConverged: return "eLORETA weights not converged";
    case ErrorCode::kNullConstraint: return "null constraint leadfield";
    case ErrorCode::kNoSource: return "no source";
    case ErrorCode::kDomain: return "domain error";
    case ErrorCode::kBalancedCase: return "balanced case - no construction";
    case ErrorCode::kWhiteningMetric: return "metric is a multiple of the inverse noise covariance";
    case ErrorCode::kNoWitness: return "no witness found - invariant subspace case";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

}  // namespace dipscan
