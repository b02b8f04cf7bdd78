#pragma once

#include <stdexcept>
#include <string>

namespace dqnas {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DQNAS_DEFINE_ERROR(Name)       \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

DQNAS_DEFINE_ERROR(ConfigError);
DQNAS_DEFINE_ERROR(UnknownSpec);
DQNAS_DEFINE_ERROR(IndexOutOfRange);
DQNAS_DEFINE_ERROR(ParseError);
DQNAS_DEFINE_ERROR(InvalidArchitecture);
DQNAS_DEFINE_ERROR(DimensionMismatch);
DQNAS_DEFINE_ERROR(NonFiniteLoss);
DQNAS_DEFINE_ERROR(EmptyMask);
DQNAS_DEFINE_ERROR(EmptyBuffer);
DQNAS_DEFINE_ERROR(BlobArityMismatch);
DQNAS_DEFINE_ERROR(ProtocolError);
DQNAS_DEFINE_ERROR(WorkerCrashed);
DQNAS_DEFINE_ERROR(EvaluationTimeout);
DQNAS_DEFINE_ERROR(EvaluatorUnavailable);
DQNAS_DEFINE_ERROR(CorruptCheckpoint);
DQNAS_DEFINE_ERROR(VersionMismatch);
DQNAS_DEFINE_ERROR(IoError);
DQNAS_DEFINE_ERROR(SearchInterrupted);

#undef DQNAS_DEFINE_ERROR

}  // namespace dqnas
