#pragma once

#include <stdexcept>
#include <string>

namespace v2eg {

// Every error raised by the library derives from Error so callers can catch
// one type; the kind() string ends up in the CLI's machine-readable output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define V2EG_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(Kind, what) {}       \
  };

V2EG_DEFINE_ERROR(DimensionError, "dimension")
V2EG_DEFINE_ERROR(ContractError, "contract")
V2EG_DEFINE_ERROR(NumericError, "numeric")
V2EG_DEFINE_ERROR(OptimizerError, "optimizer")
V2EG_DEFINE_ERROR(ParameterError, "parameter")
V2EG_DEFINE_ERROR(ConfigError, "config")
V2EG_DEFINE_ERROR(ConstructionError, "construction")
V2EG_DEFINE_ERROR(ValidationError, "validation")
V2EG_DEFINE_ERROR(IngestionError, "ingestion")
V2EG_DEFINE_ERROR(EncoderError, "encoder")
V2EG_DEFINE_ERROR(MetricError, "metric")
V2EG_DEFINE_ERROR(ReportError, "report")
V2EG_DEFINE_ERROR(IoError, "io")
V2EG_DEFINE_ERROR(ConflictError, "conflict")

#undef V2EG_DEFINE_ERROR

}  // namespace v2eg
