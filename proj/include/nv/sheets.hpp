#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nv/value.hpp"

namespace nv {

inline constexpr std::string_view kCreateOp = "$create";

bool is_identifier(std::string_view s);

struct MethodSignature {
  std::string name;
  std::vector<TypeTag> param_types;
  TypeTag return_type = TypeTag::null;

  friend bool operator==(const MethodSignature&,
                         const MethodSignature&) = default;
};

// "gcd(int,int)->int"
std::string render_signature(const MethodSignature& sig);
MethodSignature parse_signature(std::string_view text);

// Reference to the output of an earlier row (`A<k>`, 1-based).
struct CellRef {
  int row = 0;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

using Cell = std::variant<Value, CellRef>;

struct Invocation {
  int row_index = 0;  // 1-based
  std::string operation;
  std::vector<Cell> inputs;

  friend bool operator==(const Invocation&, const Invocation&) = default;
};

struct Assertion {
  int row_index = 0;
  Value expected;
  friend bool operator==(const Assertion&, const Assertion&) = default;
};

// One test: an ordered table of invocations with optional expected outputs.
struct SequenceSheet {
  std::string sheet_id;
  MethodSignature signature;
  std::vector<Invocation> rows;
  std::vector<Assertion> expected;

  bool has_assertions() const { return !expected.empty(); }
  friend bool operator==(const SequenceSheet&, const SequenceSheet&) = default;
};

// Throws the sheet error matching the first violated invariant.
void validate_sheet(const SequenceSheet& sheet);

// Line-oriented sheet format:
//   sheet <id> <name>(<tag>,...)-><tag>
//   <index>,<op>[,<cell>...][ => <literal>]
// Cells are JSON literals or `A<k>`. Blank lines and `#` comments are skipped.
SequenceSheet parse_sheet(std::string_view text);

// Parses a file holding any number of consecutive sheets.
std::vector<SequenceSheet> parse_sheets(std::string_view text);

std::string render_sheet(const SequenceSheet& sheet);

// Alternate JSON encoding of the same model.
nlohmann::json sheet_to_json(const SequenceSheet& sheet);
SequenceSheet sheet_from_json(const nlohmann::json& j);

// A doctest-style prompt reduced to its signature and one sheet per
// `>>> call` / result pair.
struct PromptTests {
  MethodSignature signature;
  std::vector<SequenceSheet> sheets;
};

PromptTests sheets_from_prompt(std::string_view prompt);

// Parses a Python literal expression (ints, floats, strings, True/False/None,
// lists, tuples, dicts with string keys). Throws DoctestParseError.
Value parse_python_literal(std::string_view text);

}  // namespace nv
