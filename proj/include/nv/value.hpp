#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace nv {

// Semantic type tags shared by signatures and values.
enum class TypeTag { int_, float_, string, bool_, list, map, null };

std::string_view to_string(TypeTag tag);
// Returns false when `text` is not one of: int float string bool list map null.
bool parse_type_tag(std::string_view text, TypeTag& out);

enum class Sentinel { error, timeout, crash };

struct Null {
  friend bool operator==(Null, Null) { return true; }
};

// A stimulus or response value. Lists and maps may nest; sentinels only
// ever appear at the top level of a cell output.
class Value {
 public:
  using List = std::vector<Value>;
  using Map = std::map<std::string, Value>;
  using Storage =
      std::variant<Null, bool, std::int64_t, double, std::string, List, Map,
                   Sentinel>;

  Value() = default;
  Value(Null) {}
  Value(bool b) : data_(b) {}
  Value(int i) : data_(static_cast<std::int64_t>(i)) {}
  Value(std::int64_t i) : data_(i) {}
  Value(double d) : data_(d) {}
  Value(const char* s) : data_(std::string(s)) {}
  Value(std::string s) : data_(std::move(s)) {}
  Value(List l) : data_(std::move(l)) {}
  Value(Map m) : data_(std::move(m)) {}
  Value(Sentinel s) : data_(s) {}

  bool is_null() const { return std::holds_alternative<Null>(data_); }
  bool is_bool() const { return std::holds_alternative<bool>(data_); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(data_); }
  bool is_float() const { return std::holds_alternative<double>(data_); }
  bool is_string() const { return std::holds_alternative<std::string>(data_); }
  bool is_list() const { return std::holds_alternative<List>(data_); }
  bool is_map() const { return std::holds_alternative<Map>(data_); }
  bool is_sentinel() const { return std::holds_alternative<Sentinel>(data_); }
  bool is_number() const { return is_int() || is_float(); }

  bool as_bool() const { return std::get<bool>(data_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(data_); }
  double as_float() const { return std::get<double>(data_); }
  const std::string& as_string() const { return std::get<std::string>(data_); }
  const List& as_list() const { return std::get<List>(data_); }
  const Map& as_map() const { return std::get<Map>(data_); }
  Sentinel as_sentinel() const { return std::get<Sentinel>(data_); }

  // Tag of a non-sentinel value.
  TypeTag tag() const;

  const Storage& storage() const { return data_; }

  // Structural equality; equivalent to comparing canonical encodings.
  friend bool operator==(const Value& a, const Value& b);

 private:
  Storage data_;
};

// Deterministic, injective text form of a value.
//   ints: base-10; floats: shortest round-trip decimal, always carrying a '.'
//   or exponent ("1.0", "1e+300", "Infinity", "NaN"); strings: JSON-quoted;
//   lists "[a,b]"; maps "{"k":v}" with keys in byte order; sentinels
//   "#ERROR", "#TIMEOUT", "#CRASH".
std::string canonical_encode(const Value& v);

// Inverse of canonical_encode. Throws FormatError on text that is not a
// canonical encoding.
Value canonical_decode(std::string_view text);

std::string_view sentinel_text(Sentinel s);

// Plain JSON model (sheet literals, verdict files): objects are maps.
// Non-finite floats and sentinels have no JSON form and throw FormatError.
nlohmann::json to_json(const Value& v);
Value from_json(const nlohmann::json& j);

// Numeric-tolerant equality used for assertion checks: when `abs_tol` > 0
// and both sides are numbers they compare within the tolerance, otherwise
// values must be structurally equal.
bool values_match(const Value& observed, const Value& expected,
                  double abs_tol = 0.0);

}  // namespace nv
