#include "nv/value.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "nv/errors.hpp"

namespace nv {

namespace {

constexpr std::string_view kTagNames[] = {"int",  "float", "string", "bool",
                                          "list", "map",   "null"};

void encode_string(const std::string& s, std::string& out) {
  out += nlohmann::json(s).dump(-1, ' ', false,
                                nlohmann::json::error_handler_t::replace);
}

void encode_float(double d, std::string& out) {
  if (std::isnan(d)) {
    out += "NaN";
    return;
  }
  if (std::isinf(d)) {
    out += d < 0 ? "-Infinity" : "Infinity";
    return;
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d);
  std::string_view text(buf, static_cast<std::size_t>(res.ptr - buf));
  out += text;
  if (text.find_first_of(".e") == std::string_view::npos) out += ".0";
}

void encode(const Value& v, std::string& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Null>) {
          out += "null";
        } else if constexpr (std::is_same_v<T, bool>) {
          out += x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          out += std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          encode_float(x, out);
        } else if constexpr (std::is_same_v<T, std::string>) {
          encode_string(x, out);
        } else if constexpr (std::is_same_v<T, Value::List>) {
          out += '[';
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (i) out += ',';
            encode(x[i], out);
          }
          out += ']';
        } else if constexpr (std::is_same_v<T, Value::Map>) {
          out += '{';
          bool first = true;
          for (const auto& [k, item] : x) {
            if (!first) out += ',';
            first = false;
            encode_string(k, out);
            out += ':';
            encode(item, out);
          }
          out += '}';
        } else {
          out += sentinel_text(x);
        }
      },
      v.storage());
}

}  // namespace

std::string_view to_string(TypeTag tag) {
  return kTagNames[static_cast<int>(tag)];
}

bool parse_type_tag(std::string_view text, TypeTag& out) {
  for (int i = 0; i < 7; ++i) {
    if (kTagNames[i] == text) {
      out = static_cast<TypeTag>(i);
      return true;
    }
  }
  return false;
}

TypeTag Value::tag() const {
  switch (data_.index()) {
    case 0: return TypeTag::null;
    case 1: return TypeTag::bool_;
    case 2: return TypeTag::int_;
    case 3: return TypeTag::float_;
    case 4: return TypeTag::string;
    case 5: return TypeTag::list;
    case 6: return TypeTag::map;
    default: throw std::logic_error("sentinel values have no type tag");
  }
}

bool operator==(const Value& a, const Value& b) {
  if (a.data_.index() != b.data_.index()) return false;
  if (a.is_float()) {
    // Bitwise-style identity so NaN == NaN and 0.0 != -0.0, matching the
    // canonical encoding.
    double x = a.as_float(), y = b.as_float();
    if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
    return x == y && std::signbit(x) == std::signbit(y);
  }
  if (a.is_list()) return a.as_list() == b.as_list();
  if (a.is_map()) return a.as_map() == b.as_map();
  return a.data_ == b.data_;
}

std::string_view sentinel_text(Sentinel s) {
  switch (s) {
    case Sentinel::error: return "#ERROR";
    case Sentinel::timeout: return "#TIMEOUT";
    case Sentinel::crash: return "#CRASH";
  }
  return "#ERROR";
}

std::string canonical_encode(const Value& v) {
  std::string out;
  encode(v, out);
  return out;
}

Value canonical_decode(std::string_view text) {
  if (text == "#ERROR") return Sentinel::error;
  if (text == "#TIMEOUT") return Sentinel::timeout;
  if (text == "#CRASH") return Sentinel::crash;
  if (text == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (text == "Infinity") return std::numeric_limits<double>::infinity();
  if (text == "-Infinity") return -std::numeric_limits<double>::infinity();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("not a canonical value: '" + std::string(text) + "'");
  }
  Value v = from_json(j);
  if (canonical_encode(v) != text) {
    throw FormatError("value text is not in canonical form: '" +
                      std::string(text) + "'");
  }
  return v;
}

nlohmann::json to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> nlohmann::json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Null>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(x))
            throw FormatError("non-finite float has no JSON form");
          return x;
        } else if constexpr (std::is_same_v<T, Value::List>) {
          auto arr = nlohmann::json::array();
          for (const auto& item : x) arr.push_back(to_json(item));
          return arr;
        } else if constexpr (std::is_same_v<T, Value::Map>) {
          auto obj = nlohmann::json::object();
          for (const auto& [k, item] : x) obj[k] = to_json(item);
          return obj;
        } else if constexpr (std::is_same_v<T, Sentinel>) {
          throw FormatError("sentinel has no JSON form");
        } else {
          return x;
        }
      },
      v.storage());
}

Value from_json(const nlohmann::json& j) {
  using json = nlohmann::json;
  switch (j.type()) {
    case json::value_t::null: return Null{};
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer: return j.get<std::int64_t>();
    case json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(
                  std::numeric_limits<std::int64_t>::max()))
        throw FormatError("integer out of 64-bit range: " + j.dump());
      return static_cast<std::int64_t>(u);
    }
    case json::value_t::number_float: return j.get<double>();
    case json::value_t::string: return j.get<std::string>();
    case json::value_t::array: {
      Value::List list;
      list.reserve(j.size());
      for (const auto& item : j) list.push_back(from_json(item));
      return list;
    }
    case json::value_t::object: {
      Value::Map map;
      for (const auto& [k, item] : j.items()) map.emplace(k, from_json(item));
      return map;
    }
    default:
      throw FormatError("unsupported JSON value: " + j.dump());
  }
}

bool values_match(const Value& observed, const Value& expected,
                  double abs_tol) {
  if (abs_tol > 0 && observed.is_number() && expected.is_number()) {
    auto as_double = [](const Value& v) {
      return v.is_int() ? static_cast<double>(v.as_int()) : v.as_float();
    };
    return std::fabs(as_double(observed) - as_double(expected)) <= abs_tol;
  }
  if (abs_tol > 0 && observed.is_list() && expected.is_list()) {
    const auto& a = observed.as_list();
    const auto& b = expected.as_list();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!values_match(a[i], b[i], abs_tol)) return false;
    return true;
  }
  return observed == expected;
}

}  // namespace nv
