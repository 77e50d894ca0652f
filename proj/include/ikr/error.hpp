#pragma once

#include <stdexcept>
#include <string>

namespace ikr {

// Error categories surface as CLI exit codes: usage 2, data 3, integrity 4.
enum class ErrorKind {
  Usage,
  Configuration,
  Dimension,
  Data,
  Training,
  Integrity,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  int exit_code() const noexcept {
    switch (kind_) {
      case ErrorKind::Usage:
      case ErrorKind::Configuration:
      case ErrorKind::Dimension:
        return 2;
      case ErrorKind::Data:
      case ErrorKind::Training:
        return 3;
      case ErrorKind::Integrity:
        return 4;
    }
    return 1;
  }

private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};
struct ConfigurationError : Error {
  explicit ConfigurationError(const std::string& w) : Error(ErrorKind::Configuration, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorKind::Training, w) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorKind::Integrity, w) {}
};

// Throws the same error type with the message prefixed by `context: `.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string m = context + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::Usage: throw UsageError(m);
    case ErrorKind::Configuration: throw ConfigurationError(m);
    case ErrorKind::Dimension: throw DimensionError(m);
    case ErrorKind::Data: throw DataError(m);
    case ErrorKind::Training: throw TrainingError(m);
    case ErrorKind::Integrity: throw IntegrityError(m);
  }
  throw Error(e.kind(), m);
}

}  // namespace ikr
