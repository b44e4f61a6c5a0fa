#pragma once

#include <stdexcept>
#include <string>

namespace ftcnn {

// All library failures derive from Error so callers can catch one type;
// the subclasses name the failing stage.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FTCNN_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

FTCNN_DEFINE_ERROR(ShapeError);
FTCNN_DEFINE_ERROR(ArchitectureError);
FTCNN_DEFINE_ERROR(InferenceError);
FTCNN_DEFINE_ERROR(ConfigError);
FTCNN_DEFINE_ERROR(OptimizerError);
FTCNN_DEFINE_ERROR(TransferError);
FTCNN_DEFINE_ERROR(AugmentationError);
FTCNN_DEFINE_ERROR(ExtractionError);
FTCNN_DEFINE_ERROR(SamplingError);
FTCNN_DEFINE_ERROR(SplitError);
FTCNN_DEFINE_ERROR(AggregationError);
FTCNN_DEFINE_ERROR(EvaluationError);
FTCNN_DEFINE_ERROR(PipelineError);
FTCNN_DEFINE_ERROR(NumericalError);
FTCNN_DEFINE_ERROR(ReportError);
FTCNN_DEFINE_ERROR(IoError);

#undef FTCNN_DEFINE_ERROR

}  // namespace ftcnn
