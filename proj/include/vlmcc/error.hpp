#pragma once

#include <stdexcept>
#include <string>

namespace vlmcc {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller handed us a value outside an operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A file or directory exists but its contents violate the format contract.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable path, short write).
class IoError : public Error {
 public:
  using Error::Error;
};

// An API was driven in a way its contract forbids (e.g. an oracle that
// needs the current estimate was called without one).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Prompt template contains a placeholder we do not know how to fill.
class TemplateError : public Error {
 public:
  using Error::Error;
};

// Could not reach the remote endpoint at all (connect/read/write failure).
class TransportError : public Error {
 public:
  using Error::Error;
};

// The endpoint answered, but the answer violates the wire contract.
class ProtocolError : public Error {
 public:
  enum class Code {
    http_status,     // non-2xx response
    malformed_json,  // body is not parseable JSON
    vocabulary,      // cast label outside {red, green, blue}
    schema,          // JSON parsed but fields missing/out of bounds
  };

  ProtocolError(Code code, const std::string& what_arg)
      : Error(what_arg), code_(code) {}

  Code code() const { return code_; }
  int http_status() const { return http_status_; }
  void set_http_status(int s) { http_status_ = s; }

 private:
  Code code_;
  int http_status_ = 0;
};

}  // namespace vlmcc
