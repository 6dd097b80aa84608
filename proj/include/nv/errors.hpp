#pragma once

#include <stdexcept>
#include <string>

namespace nv {

// Process exit codes used by the CLI; every exception below maps onto one.
enum class ErrorCategory : int {
  usage = 1,
  input = 2,
  no_survivors = 3,
  provider = 4,
  arena = 5,
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::input: return "input";
    case ErrorCategory::no_survivors: return "no_survivors";
    case ErrorCategory::provider: return "provider";
    case ErrorCategory::arena: return "arena";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

#define NV_DEFINE_ERROR(Name, Category)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(Category, what) {}     \
  }

NV_DEFINE_ERROR(UsageError, ErrorCategory::usage);

// sheets
NV_DEFINE_ERROR(SheetSyntaxError, ErrorCategory::input);
NV_DEFINE_ERROR(RefError, ErrorCategory::input);
NV_DEFINE_ERROR(SheetTypeError, ErrorCategory::input);
NV_DEFINE_ERROR(PromptParseError, ErrorCategory::input);
NV_DEFINE_ERROR(DoctestParseError, ErrorCategory::input);

// matrix
NV_DEFINE_ERROR(DuplicateIdError, ErrorCategory::input);
NV_DEFINE_ERROR(SignatureMismatchError, ErrorCategory::input);
NV_DEFINE_ERROR(IndexError, ErrorCategory::input);
NV_DEFINE_ERROR(IoError, ErrorCategory::input);
NV_DEFINE_ERROR(FormatVersionError, ErrorCategory::input);
NV_DEFINE_ERROR(FormatError, ErrorCategory::input);

// workerproto
NV_DEFINE_ERROR(ProtocolError, ErrorCategory::arena);
NV_DEFINE_ERROR(SpawnError, ErrorCategory::arena);

// arena
NV_DEFINE_ERROR(WorkerUnavailableError, ErrorCategory::arena);
NV_DEFINE_ERROR(AbortedError, ErrorCategory::arena);

// oracle
NV_DEFINE_ERROR(EmptyMatrixError, ErrorCategory::input);
NV_DEFINE_ERROR(MissingAssertionError, ErrorCategory::input);

// analysis
NV_DEFINE_ERROR(UndecidedOracleError, ErrorCategory::input);
NV_DEFINE_ERROR(UnknownVersionError, ErrorCategory::input);
NV_DEFINE_ERROR(NoSurvivorsError, ErrorCategory::no_survivors);

// providers
NV_DEFINE_ERROR(ProviderUnavailableError, ErrorCategory::provider);
NV_DEFINE_ERROR(QuotaError, ErrorCategory::provider);
NV_DEFINE_ERROR(EmptyGenerationError, ErrorCategory::provider);

// pipeline
NV_DEFINE_ERROR(DataflowError, ErrorCategory::input);

// Position is 1-based; column counts bytes.
class DslSyntaxError : public Error {
 public:
  DslSyntaxError(int line, int column, const std::string& message)
      : Error(ErrorCategory::input,
              "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

// A pipeline step failed; keeps the category of the underlying error.
class StepError : public Error {
 public:
  StepError(std::size_t step, ErrorCategory category, const std::string& message)
      : Error(category, message), step_(step) {}
  std::size_t step() const noexcept { return step_; }  // 1-based

 private:
  std::size_t step_;
};

#undef NV_DEFINE_ERROR

}  // namespace nv
