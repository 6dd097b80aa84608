#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "nv/pysub.hpp"

namespace nv::pysub {

// ---------------------------------------------------------------------------
// Tokens

enum class Tok { name, number, string, op, newline, indent, dedent, end };

struct Token {
  Tok kind;
  std::string text;  // decoded contents for strings
  int line;
};

std::vector<Token> tokenize(std::string_view source);

// ---------------------------------------------------------------------------
// Runtime values

struct PyList;
struct PyTuple;
struct PyDict;
struct Function;
struct BoundMethod;
struct ExcInstance;

struct NoneT {};
struct Builtin {
  int id;
};
struct ModuleRef {
  int id;  // 0 math, 1 os, 2 time
};
struct Range {
  std::int64_t start, stop, step;
};
struct ExcType {
  std::string name;
};

struct PyVal {
  using Storage =
      std::variant<NoneT, bool, std::int64_t, double, std::string,
                   std::shared_ptr<PyList>, std::shared_ptr<PyTuple>,
                   std::shared_ptr<PyDict>, std::shared_ptr<Function>, Builtin,
                   ModuleRef, std::shared_ptr<BoundMethod>, Range, ExcType,
                   std::shared_ptr<ExcInstance>>;
  Storage v;

  PyVal() = default;
  template <typename T>
    requires(!std::is_same_v<std::decay_t<T>, PyVal>)
  PyVal(T&& x) : v(std::forward<T>(x)) {}

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(v);
  }
  template <typename T>
  const T& get() const {
    return std::get<T>(v);
  }
};

struct PyList {
  std::vector<PyVal> items;
};
struct PyTuple {
  std::vector<PyVal> items;
};
struct PyDict {
  std::vector<std::pair<PyVal, PyVal>> entries;
  std::unordered_map<std::string, std::size_t> index;
};
struct BoundMethod {
  PyVal self;
  std::string name;
};
struct ExcInstance {
  std::string type;
  std::string message;
};

// ---------------------------------------------------------------------------
// AST

struct Expr;
struct Stmt;
using ExprPtr = std::unique_ptr<Expr>;
using StmtPtr = std::unique_ptr<Stmt>;
using Block = std::vector<StmtPtr>;

enum class ExprKind {
  constant,
  name,
  binop,      // op, items[0], items[1]
  unary,      // op, items[0]
  boolop,     // op "and"/"or", items[0], items[1]
  compare,    // ops, items (n+1)
  call,       // items[0] = callee, args = items[1..], kwargs
  attribute,  // items[0], name
  subscript,  // items[0], items[1]
  slice,      // items[0..2] may be null
  list,
  tuple,
  dict,       // items alternate key, value
  ifexp,      // items: cond, then, else
  lambda,     // params, items[0] = body
  listcomp,   // items[0] = element, comps
};

struct Param {
  std::string name;
  ExprPtr default_value;
};

struct Comprehension {
  ExprPtr target;
  ExprPtr iter;
  std::vector<ExprPtr> conds;
};

struct Expr {
  ExprKind kind;
  int line = 0;
  std::string name;  // identifier, operator, or attribute name
  PyVal constant;
  std::vector<ExprPtr> items;
  std::vector<std::string> ops;
  std::vector<std::pair<std::string, ExprPtr>> kwargs;
  std::vector<Param> params;
  std::vector<Comprehension> comps;
};

enum class StmtKind {
  expr,
  assign,     // targets, value
  augassign,  // op, target, value
  if_,        // conds + bodies; orelse
  while_,
  for_,
  def,
  return_,
  pass,
  break_,
  continue_,
  raise,
  try_,
  import,  // names (module names, with alias in aliases)
  from_import,
  global,
  assert_,
};

struct ExceptClause {
  ExprPtr type;  // null for bare except
  std::string alias;
  Block body;
};

struct Stmt {
  StmtKind kind;
  int line = 0;
  std::vector<ExprPtr> targets;
  ExprPtr value;
  ExprPtr value2;  // assert message
  std::string op;
  std::vector<ExprPtr> conds;
  std::vector<Block> bodies;
  Block orelse;
  // def
  std::string name;
  std::vector<Param> params;
  std::unordered_set<std::string> globals;  // names declared global in the def body
  // import
  std::vector<std::pair<std::string, std::string>> names;  // (name, alias)
  // try
  std::vector<ExceptClause> handlers;
};

struct Function {
  std::string name;
  const std::vector<Param>* params = nullptr;
  std::vector<PyVal> defaults;  // aligned with params; NoneT sentinel unused
  std::vector<bool> has_default;
  const Block* body = nullptr;
  const Expr* lambda_body = nullptr;
  const std::unordered_set<std::string>* globals = nullptr;
  std::shared_ptr<struct Env> closure;
};

struct Env {
  std::unordered_map<std::string, PyVal> vars;
  std::shared_ptr<Env> parent;
};

}  // namespace nv::pysub

namespace nv::pysub {

struct Module {
  Block body;
};

Block parse_program(const std::vector<Token>& tokens);

// Bytes currently allocated through operator new by the calling thread.
std::int64_t live_heap_bytes();

}  // namespace nv::pysub
