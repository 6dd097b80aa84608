#pragma once

// A small interpreter for the pure-function subset of Python that candidate
// modules in this project are written in. It backs the built-in stub worker
// so the engine can execute candidates without an external Python runtime.
//
// Supported: def/lambda, if/elif/else, while, for, break/continue, return,
// try/except, raise, assert, global, import of math/os/time, int/float/str/
// bool/None/list/tuple/dict values, comprehensions, slicing, and the common
// builtins. Anything else is reported as a compile error.

#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nv/value.hpp"

namespace nv::pysub {

class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Limits {
  std::chrono::milliseconds wall{2000};
  std::size_t mem_mb = 256;
  int max_depth = 1000;
};

enum class Outcome { ok, error, timeout, crash };

struct CallResult {
  Outcome outcome = Outcome::ok;
  Value value;
  std::string error_type;  // Python exception name for Outcome::error
  std::string message;
  int exit_code = 0;  // for Outcome::crash
};

struct Module;

// Parses `source`; throws CompileError with a line number on failure.
std::shared_ptr<const Module> compile(std::string_view source);

class Interpreter {
 public:
  explicit Interpreter(std::shared_ptr<const Module> module);
  ~Interpreter();
  Interpreter(const Interpreter&) = delete;
  Interpreter& operator=(const Interpreter&) = delete;

  // Runs the module's top-level statements.
  CallResult load(const Limits& limits);
  bool has_function(std::string_view name) const;
  CallResult call(std::string_view name, const std::vector<Value>& args,
                  const Limits& limits);

  // Text written by print() since the last call.
  std::string take_output();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

}  // namespace nv::pysub
