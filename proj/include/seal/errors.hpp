#pragma once

#include <stdexcept>
#include <string>

namespace seal {

// Base for every error thrown by the library. Each concrete error type
// corresponds to one named failure mode of a module contract.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define SEAL_DEFINE_ERROR(Name)                                \
  class Name : public ::seal::Error {                          \
  public:                                                      \
    explicit Name(const std::string& what = #Name)             \
        : ::seal::Error(std::string(#Name) + ": " + what) {}   \
  }

// numerics
SEAL_DEFINE_ERROR(NotSquare);
SEAL_DEFINE_ERROR(NotSymmetric);
SEAL_DEFINE_ERROR(NoConvergence);
SEAL_DEFINE_ERROR(IndefiniteInput);
SEAL_DEFINE_ERROR(TooFewSamples);
SEAL_DEFINE_ERROR(NegativeSigma);

// datagen
SEAL_DEFINE_ERROR(InvalidParams);
SEAL_DEFINE_ERROR(DistanceBelowReference);

// ercd
SEAL_DEFINE_ERROR(UnknownFeature);
SEAL_DEFINE_ERROR(EmptyDataset);
SEAL_DEFINE_ERROR(SingleGroupDataset);
SEAL_DEFINE_ERROR(EmptyStratum);
SEAL_DEFINE_ERROR(UnresolvableMetric);

// fedcal
SEAL_DEFINE_ERROR(SchemaMismatch);
SEAL_DEFINE_ERROR(NonFiniteLoss);
SEAL_DEFINE_ERROR(DimensionMismatch);
SEAL_DEFINE_ERROR(WeightSumMismatch);

// taskmodel
SEAL_DEFINE_ERROR(ShapeMismatch);
SEAL_DEFINE_ERROR(DegenerateLabels);

// auditval
SEAL_DEFINE_ERROR(CovarianceFailure);
SEAL_DEFINE_ERROR(EmptyCell);
SEAL_DEFINE_ERROR(BrokenLinkage);

// governance
SEAL_DEFINE_ERROR(MalformedPolicy);
SEAL_DEFINE_ERROR(IllegalTransition);
SEAL_DEFINE_ERROR(ChainCorrupt);
SEAL_DEFINE_ERROR(AuthFailure);
SEAL_DEFINE_ERROR(WrongKeyLength);
SEAL_DEFINE_ERROR(Denied);
SEAL_DEFINE_ERROR(NotCertified);

// cli / io
SEAL_DEFINE_ERROR(ConfigError);
SEAL_DEFINE_ERROR(DigestMismatch);
SEAL_DEFINE_ERROR(IoError);

#undef SEAL_DEFINE_ERROR

}  // namespace seal
