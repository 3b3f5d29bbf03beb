#pragma once

#include <stdexcept>
#include <string>

namespace sickfuse {

enum class ErrorKind {
  Shape,
  Contract,
  DegenerateBatch,
  MissingStream,
  Parse,
  Order,
  Gap,
  ZeroVariance,
  Config,
  Range,
  Empty,
  ShortWindow,
  Degenerate,
  Divergence,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SICKFUSE_DEFINE_ERROR(Name)                                      \
  class Name##Error : public Error {                                     \
   public:                                                               \
    explicit Name##Error(const std::string& what)                        \
        : Error(ErrorKind::Name, what) {}                                \
  };

SICKFUSE_DEFINE_ERROR(Shape)
SICKFUSE_DEFINE_ERROR(Contract)
SICKFUSE_DEFINE_ERROR(MissingStream)
SICKFUSE_DEFINE_ERROR(Order)
SICKFUSE_DEFINE_ERROR(ZeroVariance)
SICKFUSE_DEFINE_ERROR(Config)
SICKFUSE_DEFINE_ERROR(Range)
SICKFUSE_DEFINE_ERROR(Empty)
SICKFUSE_DEFINE_ERROR(ShortWindow)
SICKFUSE_DEFINE_ERROR(Degenerate)
SICKFUSE_DEFINE_ERROR(Io)

#undef SICKFUSE_DEFINE_ERROR

/// A tensor was built from NaN or Inf values.
class NonFiniteError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DegenerateBatchError : public Error {
 public:
  explicit DegenerateBatchError(const std::string& what)
      : Error(ErrorKind::DegenerateBatch, what) {}
};

/// Malformed input; `line` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorKind::Parse,
              line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A stream has no valid data over [begin, end] seconds.
class GapError : public Error {
 public:
  GapError(std::string stream, double begin, double end);

  const std::string& stream() const noexcept { return stream_; }
  double begin() const noexcept { return begin_; }
  double end() const noexcept { return end_; }

 private:
  std::string stream_;
  double begin_;
  double end_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch);

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace sickfuse
