#pragma once

#include <stdexcept>
#include <string>

namespace bctn {

// Error taxonomy. Each condition the library detects maps to one of these,
// so callers (and tests) can match on type rather than message text.

struct BctnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tensor engine
struct ShapeMismatch : BctnError { using BctnError::BctnError; };
struct EmptyInput : BctnError { using BctnError::BctnError; };
struct NotScalar : BctnError { using BctnError::BctnError; };
struct DetachedGraph : BctnError { using BctnError::BctnError; };

// data
struct EmptyText : BctnError { using BctnError::BctnError; };
struct MalformedLine : BctnError {
  long line_no;
  MalformedLine(long line, const std::string& what)
      : BctnError("line " + std::to_string(line) + ": " + what), line_no(line) {}
};
struct MissingField : BctnError {
  std::string field;
  long line_no;
  MissingField(const std::string& name, long line)
      : BctnError("line " + std::to_string(line) + ": missing field \"" + name + "\""),
        field(name),
        line_no(line) {}
};
struct ExampleTooLong : BctnError { using BctnError::BctnError; };

// encoder / thinkers / decoder
struct TooLong : BctnError { using BctnError::BctnError; };
struct UnknownSide : BctnError { using BctnError::BctnError; };
struct StepsExhausted : BctnError { using BctnError::BctnError; };
struct EmptyPrefix : BctnError { using BctnError::BctnError; };
struct LengthMismatch : BctnError { using BctnError::BctnError; };

// training / checkpoints
struct EmptyCorpus : BctnError { using BctnError::BctnError; };
struct DivergedLoss : BctnError { using BctnError::BctnError; };
struct CheckpointMissing : BctnError { using BctnError::BctnError; };
struct IncompatibleDims : BctnError { using BctnError::BctnError; };
struct BadMagic : BctnError { using BctnError::BctnError; };
struct TruncatedFile : BctnError { using BctnError::BctnError; };
struct DimMismatch : BctnError { using BctnError::BctnError; };
struct UnwritablePath : BctnError { using BctnError::BctnError; };

// metrics
struct EmptyReference : BctnError { using BctnError::BctnError; };

// cli
struct UsageError : BctnError { using BctnError::BctnError; };

}  // namespace bctn
