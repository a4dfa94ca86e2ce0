#pragma once

#include <stdexcept>
#include <string>

namespace bdc {

enum class ErrorKind {
  kNonBinaryValue,
  kLengthMismatch,
  kChannelMismatch,
  kGeometryMismatch,
  kShapeMismatch,
  kEmptyTensor,
  kNonPositiveAlpha,
  kStackLengthMismatch,
  kKernelNotOne,
  kIndivisibleShape,
  kGridTooSmall,
  kLabelOutOfRange,
  kTapeMismatch,
  kChannelPlanMismatch,
  kInvalidKernel,
  kConfig,
  kIo,
  kNumeric,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace bdc
