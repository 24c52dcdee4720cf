#pragma once

#include <stdexcept>
#include <string>

namespace gdec {

enum class ErrorKind {
  config,
  protocol,
  contract,
  domain,
  data,
  degenerate,
  insufficient_data,
};

// Process exit status used by the command-line tool for each error kind.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::protocol:
    case ErrorKind::contract:
      return 2;
    case ErrorKind::data:
      return 3;
    case ErrorKind::degenerate:
    case ErrorKind::insufficient_data:
      return 4;
    default:
      return 1;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, "configuration error: " + w) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorKind::protocol, "protocol error: " + w) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w)
      : Error(ErrorKind::contract, "contract violation: " + w) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, "domain error: " + w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, "data error: " + w) {}
};

struct DegenerateInput : Error {
  explicit DegenerateInput(const std::string& w)
      : Error(ErrorKind::degenerate, "degenerate input: " + w) {}
};

struct InsufficientData : Error {
  explicit InsufficientData(const std::string& w)
      : Error(ErrorKind::insufficient_data, "insufficient data: " + w) {}
};

}  // namespace gdec
