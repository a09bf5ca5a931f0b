#ifndef DIRACFLOW_ERROR_HPP
#define DIRACFLOW_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace diracflow {

enum class ErrorKind {
  InvalidGeometry,
  InvalidBoundaryData,
  Resolution,
  Singularity,
  Undersampling,
  Assembly,
  ChannelTruncation,
  Calibration,
  Size,
  Inconclusive,
  Parse,
  Io,
  Precondition,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidGeometry: return "invalid-geometry";
    case ErrorKind::InvalidBoundaryData: return "invalid-boundary-data";
    case ErrorKind::Resolution: return "resolution";
    case ErrorKind::Singularity: return "singularity";
    case ErrorKind::Undersampling: return "undersampling";
    case ErrorKind::Assembly: return "assembly";
    case ErrorKind::ChannelTruncation: return "channel-truncation";
    case ErrorKind::Calibration: return "calibration";
    case ErrorKind::Size: return "size";
    case ErrorKind::Inconclusive: return "inconclusive";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
    case ErrorKind::Precondition: return "precondition";
  }
  return "unknown";
}

// All library failures are reported through this one exception type; the kind
// lets callers (the sweep runner in particular) record per-row failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace diracflow

#endif
