#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dspo {

enum class ErrorKind { Dimension, Numeric, Data, Config, Io };

constexpr std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "DimensionError";
    case ErrorKind::Numeric: return "NumericError";
    case ErrorKind::Data: return "DataError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace dspo
