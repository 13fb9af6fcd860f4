#pragma once

#include <stdexcept>
#include <string>

namespace lgeq {

/// Exit-status class used by the command-line front end.
enum class ErrorClass { usage = 1, data = 2, numeric = 3 };

/// Base of every exception thrown by the toolkit. `kind()` is a stable
/// machine-readable name (e.g. "FormatError").
class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorClass cls, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)), cls_(cls) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  std::string kind_;
  ErrorClass cls_;
};

#define LGEQ_DEFINE_ERROR(Name, Class)                                  \
  class Name : public ::lgeq::Error {                                   \
   public:                                                              \
    explicit Name(const std::string& what)                              \
        : ::lgeq::Error(#Name, ::lgeq::ErrorClass::Class, what) {}      \
  }

LGEQ_DEFINE_ERROR(ShapeError, data);
LGEQ_DEFINE_ERROR(DegenerateHistogram, data);
LGEQ_DEFINE_ERROR(DegenerateData, data);
LGEQ_DEFINE_ERROR(DegenerateRange, data);
LGEQ_DEFINE_ERROR(EmptyRegion, data);
LGEQ_DEFINE_ERROR(EmptyMask, data);
LGEQ_DEFINE_ERROR(AlignmentError, data);
LGEQ_DEFINE_ERROR(FormatError, data);
LGEQ_DEFINE_ERROR(UnsupportedElementType, data);
LGEQ_DEFINE_ERROR(ManifestError, data);
LGEQ_DEFINE_ERROR(IoError, data);
LGEQ_DEFINE_ERROR(SpacingError, data);
LGEQ_DEFINE_ERROR(SpecError, usage);
LGEQ_DEFINE_ERROR(ConfigError, usage);
LGEQ_DEFINE_ERROR(SingleClassError, data);
LGEQ_DEFINE_ERROR(EmptyClassError, data);
LGEQ_DEFINE_ERROR(NoGroundTruth, data);
LGEQ_DEFINE_ERROR(LengthMismatch, data);
LGEQ_DEFINE_ERROR(ZeroVariance, numeric);
LGEQ_DEFINE_ERROR(EmptyDenominator, numeric);
LGEQ_DEFINE_ERROR(DivisionByZero, numeric);
LGEQ_DEFINE_ERROR(DivergenceError, numeric);
LGEQ_DEFINE_ERROR(Unachievable, numeric);

#undef LGEQ_DEFINE_ERROR

}  // namespace lgeq
