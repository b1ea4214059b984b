#pragma once

#include <stdexcept>
#include <string>

namespace memharness {

// Root of every error the harness raises. Each subsystem derives its own
// kinds so callers can catch at the granularity they need.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedCorpus : public Error {
 public:
  using Error::Error;
};

class DateParseError : public Error {
 public:
  using Error::Error;
};

class BindError : public Error {
 public:
  using Error::Error;
};

class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

class EmptyText : public Error {
 public:
  using Error::Error;
};

class ProviderTimeout : public Error {
 public:
  using Error::Error;
};

class ProviderHttpError : public Error {
 public:
  ProviderHttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class MissingSamples : public Error {
 public:
  using Error::Error;
};

class InvalidCounts : public Error {
 public:
  using Error::Error;
};

class MissingPrice : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// An orchestrated stage failed; `stage()` names it for diagnostics.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace memharness
