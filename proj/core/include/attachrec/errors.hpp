#pragma once

#include <stdexcept>
#include <string>

namespace attachrec {

// Invalid input, configuration, or artifact state. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failure while executing an otherwise valid request. CLI maps this to exit code 2.
class ExecutionError : public std::runtime_error {
public:
  explicit ExecutionError(const std::string& what) : std::runtime_error(what) {}
};

// Every query term has zero collection frequency in the target mailbox.
class QueryUnanswerable : public ValidationError {
public:
  explicit QueryUnanswerable(const std::string& what) : ValidationError(what) {}
};

}  // namespace attachrec
