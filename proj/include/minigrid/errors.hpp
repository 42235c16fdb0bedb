#pragma once

#include <stdexcept>
#include <string>

namespace minigrid {

class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

private:
  std::string code_;
};

struct DuplicateName : Error {
  explicit DuplicateName(const std::string& name)
      : Error("DUPLICATE_NAME", "action name already in group: " + name) {}
};

struct UnknownAction : Error {
  explicit UnknownAction(const std::string& what)
      : Error("UNKNOWN_ACTION", "unknown action: " + what) {}
};

struct SelfEdge : Error {
  explicit SelfEdge(const std::string& name)
      : Error("SELF_EDGE", "dependency from an action to itself: " + name) {}
};

struct CycleDetected : Error {
  CycleDetected(const std::string& pred, const std::string& succ)
      : Error("CYCLE_DETECTED",
              "dependency " + pred + " -> " + succ + " would create a cycle") {}
};

struct MalformedEncoding : Error {
  explicit MalformedEncoding(const std::string& detail)
      : Error("MALFORMED_ENCODING", "malformed encoding: " + detail) {}
};

struct IllegalTransition : Error {
  explicit IllegalTransition(const std::string& detail)
      : Error("ILLEGAL_TRANSITION", detail) {}
};

struct ConditionUnevaluable : Error {
  explicit ConditionUnevaluable(const std::string& detail)
      : Error("CONDITION_UNEVALUABLE", detail) {}
};

struct NotAuthorized : Error {
  NotAuthorized() : Error("NOT_AUTHORIZED", "identity not authorized") {}
};

struct UnsupportedResource : Error {
  explicit UnsupportedResource(const std::string& dimension)
      : Error("UNSUPPORTED_RESOURCE", "unsupported resource: " + dimension),
        dimension_(dimension) {}
  const std::string& dimension() const { return dimension_; }

private:
  std::string dimension_;
};

struct MissingScript : Error {
  explicit MissingScript(const std::string& name)
      : Error("MISSING_SCRIPT", "script file not present in uspace: " + name) {}
};

struct UnknownScriptType : Error {
  explicit UnknownScriptType(const std::string& type)
      : Error("UNKNOWN_SCRIPT_TYPE", "no interpreter configured for " + type) {}
};

struct Oversize : Error {
  explicit Oversize(std::size_t size)
      : Error("OVERSIZE", "frame payload of " + std::to_string(size) +
                              " bytes exceeds the cap") {}
};

struct Truncated : Error {
  Truncated() : Error("TRUNCATED", "stream ended mid-frame") {}
};

struct MalformedPayload : Error {
  explicit MalformedPayload(const std::string& detail)
      : Error("MALFORMED_PAYLOAD", "malformed payload: " + detail) {}
};

struct UnknownVsite : Error {
  explicit UnknownVsite(const std::string& name)
      : Error("UNKNOWN_VSITE", "no such vsite: " + name) {}
};

struct UnknownJob : Error {
  explicit UnknownJob(const std::string& id)
      : Error("UNKNOWN_JOB", "no such job: " + id) {}
};

struct MalformedPlan : Error {
  MalformedPlan(const std::string& detail, int line, int column)
      : Error("MALFORMED_PLAN", detail + " at line " + std::to_string(line) +
                                    ", column " + std::to_string(column)),
        line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

private:
  int line_;
  int column_;
};

struct UndeclaredParameter : Error {
  explicit UndeclaredParameter(const std::string& name)
      : Error("UNDECLARED_PARAMETER", "undeclared parameter: $" + name) {}
};

struct FileTooLarge : Error {
  explicit FileTooLarge(const std::string& name)
      : Error("FILE_TOO_LARGE", "file exceeds inline transfer cap: " + name) {}
};

struct MissingLocalFile : Error {
  explicit MissingLocalFile(const std::string& name)
      : Error("MISSING_LOCAL_FILE", "local file not found: " + name) {}
};

struct AllServersUnhealthy : Error {
  AllServersUnhealthy() : Error("ALL_SERVERS_UNHEALTHY", "no healthy compute server left") {}
};

struct OutcomeUnavailable : Error {
  explicit OutcomeUnavailable(const std::string& detail)
      : Error("OUTCOME_UNAVAILABLE", detail) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& detail) : Error("CONFIG_ERROR", detail) {}
};

struct NetError : Error {
  explicit NetError(const std::string& detail) : Error("NET_ERROR", detail) {}
};

} // namespace minigrid
