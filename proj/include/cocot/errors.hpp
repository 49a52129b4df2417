#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cocot {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid value at construction time (degenerate box, empty text, ...).
struct ConstructionError : Error {
  using Error::Error;
};

// Caller broke a precondition.
struct UsageError : Error {
  using Error::Error;
};

struct OutOfBoundsError : Error {
  using Error::Error;
};

// Structured model output could not be parsed. `field` names the missing or
// malformed label when one applies; `raw` keeps the offending text.
struct ParseError : Error {
  std::string field;
  std::string raw;
  ParseError(std::string message, std::string field_ = {}, std::string raw_ = {})
      : Error(std::move(message)), field(std::move(field_)), raw(std::move(raw_)) {}
};

struct RangeError : Error {
  using Error::Error;
};

// Record decoding failure; `line` is 1-based when read from a file, 0 otherwise.
struct DecodeError : Error {
  std::size_t line = 0;
  explicit DecodeError(std::string message, std::size_t line_ = 0)
      : Error(line_ ? "line " + std::to_string(line_) + ": " + message : message), line(line_) {}
};

struct ClientError : Error {
  int status = 0;  // last HTTP status, 0 for transport errors and non-HTTP clients
  explicit ClientError(std::string message, int status_ = 0) : Error(std::move(message)), status(status_) {}
};

struct FixtureMissError : ClientError {
  std::string digest;
  explicit FixtureMissError(std::string digest_)
      : ClientError("no fixture matches request digest " + digest_), digest(std::move(digest_)) {}
};

struct TemplateError : Error {
  std::string name;
  TemplateError(std::string message, std::string name_) : Error(std::move(message)), name(std::move(name_)) {}
};

struct GroundingFailed : Error {
  using Error::Error;
};

struct ChainFailed : Error {
  using Error::Error;
};

struct ReportError : Error {
  std::vector<std::string> ids;
  ReportError(std::string message, std::vector<std::string> ids_) : Error(std::move(message)), ids(std::move(ids_)) {}
};

// Bad run configuration; `key_path` points at the offending key ("grounding.max_regions").
struct ConfigError : Error {
  std::string key_path;
  ConfigError(std::string key_path_, const std::string& message)
      : Error(key_path_ + ": " + message), key_path(std::move(key_path_)) {}
};

}  // namespace cocot
