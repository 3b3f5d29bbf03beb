#include "sickfuse/errors.hpp"

#include <cstdio>

namespace sickfuse {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::DegenerateBatch: return "degenerate-batch";
    case ErrorKind::MissingStream: return "missing-stream";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Order: return "order";
    case ErrorKind::Gap: return "gap";
    case ErrorKind::ZeroVariance: return "zero-variance";
    case ErrorKind::Config: return "config";
    case ErrorKind::Range: return "range";
    case ErrorKind::Empty: return "empty";
    case ErrorKind::ShortWindow: return "short-window";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

namespace {

std::string gap_message(const std::string& stream, double begin, double end) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s stream has no valid data over [%.3f s, %.3f s]",
                stream.c_str(), begin, end);
  return buf;
}

}  // namespace

GapError::GapError(std::string stream, double begin, double end)
    : Error(ErrorKind::Gap, gap_message(stream, begin, end)),
      stream_(std::move(stream)),
      begin_(begin),
      end_(end) {}

DivergenceError::DivergenceError(std::size_t epoch, std::size_t batch)
    : Error(ErrorKind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

}  // namespace sickfuse
