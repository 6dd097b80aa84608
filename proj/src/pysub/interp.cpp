#include <pthread.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "ast.hpp"


namespace nv::pysub {

namespace {

struct PyException {
  std::string type;
  std::string message;
};
struct TimeoutSignal {};
struct CrashSignal {
  int code;
};

enum class Flow { normal, break_, continue_, return_ };

enum BuiltinId : int {
  b_abs, b_min, b_max, b_len, b_range, b_int, b_float, b_str, b_bool, b_list, b_tuple,
  b_dict, b_sorted, b_reversed, b_sum, b_any, b_all, b_enumerate, b_zip, b_print,
  b_isinstance, b_pow, b_divmod, b_round, b_chr, b_ord, b_map, b_filter, b_repr,
  m_gcd, m_lcm, m_sqrt, m_floor, m_ceil, m_isqrt, m_fabs, m_log, m_exp, m_trunc,
  m_isclose, m_factorial, m_prod, m_comb,
  os_exit, os_abort, time_sleep, time_time, time_perf_counter,
  builtin_count
};

constexpr std::string_view kBuiltinNames[] = {
    "abs", "min", "max", "len", "range", "int", "float", "str", "bool", "list", "tuple",
    "dict", "sorted", "reversed", "sum", "any", "all", "enumerate", "zip", "print",
    "isinstance", "pow", "divmod", "round", "chr", "ord", "map", "filter", "repr",
    "gcd", "lcm", "sqrt", "floor", "ceil", "isqrt", "fabs", "log", "exp", "trunc",
    "isclose", "factorial", "prod", "comb",
    "_exit", "abort", "sleep", "time", "perf_counter"};
static_assert(std::size(kBuiltinNames) == builtin_count);

constexpr int kGlobalBuiltinEnd = m_gcd;

struct ExcParent {
  std::string_view child, parent;
};
constexpr ExcParent kExcTree[] = {
    {"ZeroDivisionError", "ArithmeticError"}, {"OverflowError", "ArithmeticError"},
    {"ArithmeticError", "Exception"},         {"ValueError", "Exception"},
    {"TypeError", "Exception"},               {"IndexError", "LookupError"},
    {"KeyError", "LookupError"},              {"LookupError", "Exception"},
    {"RecursionError", "RuntimeError"},       {"NotImplementedError", "RuntimeError"},
    {"RuntimeError", "Exception"},            {"AssertionError", "Exception"},
    {"UnboundLocalError", "NameError"},       {"NameError", "Exception"},
    {"AttributeError", "Exception"},          {"MemoryError", "Exception"},
    {"StopIteration", "Exception"},           {"Exception", "BaseException"},
};

bool is_exception_name(std::string_view name) {
  if (name == "BaseException") return true;
  for (const auto& e : kExcTree)
    if (e.child == name) return true;
  return false;
}

bool exc_is_subclass(std::string_view type, std::string_view base) {
  while (true) {
    if (type == base) return true;
    std::string_view next;
    for (const auto& e : kExcTree)
      if (e.child == type) next = e.parent;
    if (next.empty()) return false;
    type = next;
  }
}

[[noreturn]] void raise(std::string type, std::string message) {
  throw PyException{std::move(type), std::move(message)};
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) raise("OverflowError", "integer overflow (64-bit ints)");
  return r;
}
std::int64_t checked_sub(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_sub_overflow(a, b, &r)) raise("OverflowError", "integer overflow (64-bit ints)");
  return r;
}
std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) raise("OverflowError", "integer overflow (64-bit ints)");
  return r;
}

std::string float_repr(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d < 0 ? "-inf" : "inf";
  if (d == 0) return std::signbit(d) ? "-0.0" : "0.0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d, std::chars_format::scientific);
  std::string sci(buf, res.ptr);
  // sci = [-]D[.DDD]e[+-]XX
  bool neg = sci[0] == '-';
  if (neg) sci.erase(0, 1);
  auto epos = sci.find('e');
  int exp = std::stoi(sci.substr(epos + 1));
  std::string digits;
  for (char c : sci.substr(0, epos))
    if (c != '.') digits += c;
  std::string out = neg ? "-" : "";
  if (exp >= -4 && exp < 16) {
    if (exp >= 0) {
      if (static_cast<int>(digits.size()) <= exp + 1) {
        out += digits + std::string(exp + 1 - digits.size(), '0') + ".0";
      } else {
        out += digits.substr(0, exp + 1) + "." + digits.substr(exp + 1);
      }
    } else {
      out += "0." + std::string(-exp - 1, '0') + digits;
    }
    return out;
  }
  out += digits.substr(0, 1);
  if (digits.size() > 1) out += "." + digits.substr(1);
  char ebuf[16];
  std::snprintf(ebuf, sizeof ebuf, "e%c%02d", exp < 0 ? '-' : '+', std::abs(exp));
  return out + ebuf;
}

std::string quote_str(const std::string& s) {
  char q = (s.find('\'') != std::string::npos && s.find('"') == std::string::npos) ? '"' : '\'';
  std::string out(1, q);
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default:
        if (c == q) {
          out += '\\';
          out += c;
        } else {
          out += c;
        }
    }
  }
  out += q;
  return out;
}

struct Frame {
  std::shared_ptr<Env> env;
  const std::unordered_set<std::string>* global_names = nullptr;
};

}  // namespace

struct Interpreter::State {
  std::shared_ptr<const Module> module;
  std::shared_ptr<Env> globals = std::make_shared<Env>();
  std::chrono::steady_clock::time_point deadline;
  std::size_t max_items = 0;
  std::size_t max_bytes = 0;
  int max_depth = 1000;
  int depth = 0;
  std::uint64_t steps = 0;
  std::string output;
  const char* stack_base = nullptr;
  std::size_t stack_budget = 0;
  std::vector<PyException> handling;

  // ---- limits
  std::int64_t heap_baseline = 0;

  void tick() {
    if ((++steps & 255) == 0) {
      if (std::chrono::steady_clock::now() >= deadline) throw TimeoutSignal{};
      check_heap();
    }
  }
  void check_heap() {
    if (live_heap_bytes() - heap_baseline > static_cast<std::int64_t>(max_bytes))
      raise("MemoryError", "memory limit exceeded");
  }
  void check_items(std::size_t n) {
    if ((n & 1023) == 0) check_heap();
    if (n > max_items) raise("MemoryError", "allocation of " + std::to_string(n) + " items exceeds the memory limit");
  }
  void check_bytes(std::size_t n) {
    if (n > max_bytes) raise("MemoryError", "string of " + std::to_string(n) + " bytes exceeds the memory limit");
  }
  void check_stack() {
    char probe;
    if (stack_base && static_cast<std::size_t>(stack_base - &probe) > stack_budget)
      raise("RecursionError", "maximum recursion depth exceeded");
  }

  // ---- type helpers
  static std::string type_name(const PyVal& v) {
    switch (v.v.index()) {
      case 0: return "NoneType";
      case 1: return "bool";
      case 2: return "int";
      case 3: return "float";
      case 4: return "str";
      case 5: return "list";
      case 6: return "tuple";
      case 7: return "dict";
      case 8: return "function";
      case 9: return "builtin_function_or_method";
      case 10: return "module";
      case 11: return "method";
      case 12: return "range";
      case 13: return "type";
      default: return "exception";
    }
  }
  static bool is_intlike(const PyVal& v) { return v.is<std::int64_t>() || v.is<bool>(); }
  static bool is_number(const PyVal& v) { return is_intlike(v) || v.is<double>(); }
  static std::int64_t as_int(const PyVal& v) {
    if (v.is<bool>()) return v.get<bool>() ? 1 : 0;
    return v.get<std::int64_t>();
  }
  static double as_double(const PyVal& v) {
    if (v.is<double>()) return v.get<double>();
    return static_cast<double>(as_int(v));
  }
  std::int64_t require_int(const PyVal& v, std::string_view what) {
    if (!is_intlike(v)) raise("TypeError", std::string(what) + " must be an integer, not " + type_name(v));
    return as_int(v);
  }

  bool truthy(const PyVal& v) {
    switch (v.v.index()) {
      case 0: return false;
      case 1: return v.get<bool>();
      case 2: return v.get<std::int64_t>() != 0;
      case 3: return v.get<double>() != 0.0;
      case 4: return !v.get<std::string>().empty();
      case 5: return !v.get<std::shared_ptr<PyList>>()->items.empty();
      case 6: return !v.get<std::shared_ptr<PyTuple>>()->items.empty();
      case 7: return !v.get<std::shared_ptr<PyDict>>()->entries.empty();
      case 12: return range_len(v.get<Range>()) > 0;
      default: return true;
    }
  }

  std::string repr(const PyVal& v) {
    if (v.is<std::string>()) return quote_str(v.get<std::string>());
    return str(v);
  }

  std::string str(const PyVal& v) {
    tick();
    switch (v.v.index()) {
      case 0: return "None";
      case 1: return v.get<bool>() ? "True" : "False";
      case 2: return std::to_string(v.get<std::int64_t>());
      case 3: return float_repr(v.get<double>());
      case 4: return v.get<std::string>();
      case 5:
      case 6: {
        const auto& items = v.is<std::shared_ptr<PyList>>() ? v.get<std::shared_ptr<PyList>>()->items
                                                            : v.get<std::shared_ptr<PyTuple>>()->items;
        bool tuple = v.is<std::shared_ptr<PyTuple>>();
        std::string out = tuple ? "(" : "[";
        for (std::size_t i = 0; i < items.size(); ++i) {
          if (i) out += ", ";
          out += repr(items[i]);
          check_bytes(out.size());
        }
        if (tuple && items.size() == 1) out += ",";
        out += tuple ? ")" : "]";
        return out;
      }
      case 7: {
        std::string out = "{";
        bool first = true;
        for (const auto& [k, val] : v.get<std::shared_ptr<PyDict>>()->entries) {
          if (!first) out += ", ";
          first = false;
          out += repr(k) + ": " + repr(val);
          check_bytes(out.size());
        }
        return out + "}";
      }
      case 8: return "<function " + v.get<std::shared_ptr<Function>>()->name + ">";
      case 9: return "<built-in function " + std::string(kBuiltinNames[v.get<Builtin>().id]) + ">";
      case 10: return "<module>";
      case 11: return "<bound method " + v.get<std::shared_ptr<BoundMethod>>()->name + ">";
      case 12: {
        const auto& r = v.get<Range>();
        std::string out = "range(" + std::to_string(r.start) + ", " + std::to_string(r.stop);
        if (r.step != 1) out += ", " + std::to_string(r.step);
        return out + ")";
      }
      case 13: return "<class '" + v.get<ExcType>().name + "'>";
      default: return v.get<std::shared_ptr<ExcInstance>>()->message;
    }
  }

  // ---- hashing for dict keys
  std::string hash_key(const PyVal& v) {
    if (is_intlike(v)) return "i" + std::to_string(as_int(v));
    if (v.is<double>()) {
      double d = v.get<double>();
      if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9.2e18)
        return "i" + std::to_string(static_cast<std::int64_t>(d));
      return "f" + float_repr(d);
    }
    if (v.is<std::string>()) return "s" + v.get<std::string>();
    if (v.is<NoneT>()) return "n";
    if (v.is<std::shared_ptr<PyTuple>>()) {
      std::string out = "t(";
      for (const auto& item : v.get<std::shared_ptr<PyTuple>>()->items) {
        auto k = hash_key(item);
        out += std::to_string(k.size()) + ":" + k;
      }
      return out + ")";
    }
    if (v.is<ExcType>()) return "c" + v.get<ExcType>().name;
    raise("TypeError", "unhashable type: '" + type_name(v) + "'");
  }

  // ---- comparisons
  bool eq(const PyVal& a, const PyVal& b) {
    tick();
    if (is_number(a) && is_number(b)) {
      if (is_intlike(a) && is_intlike(b)) return as_int(a) == as_int(b);
      return as_double(a) == as_double(b);
    }
    if (a.v.index() != b.v.index()) return false;
    switch (a.v.index()) {
      case 0: return true;
      case 4: return a.get<std::string>() == b.get<std::string>();
      case 5: return seq_eq(a.get<std::shared_ptr<PyList>>()->items, b.get<std::shared_ptr<PyList>>()->items);
      case 6: return seq_eq(a.get<std::shared_ptr<PyTuple>>()->items, b.get<std::shared_ptr<PyTuple>>()->items);
      case 7: {
        const auto& x = *a.get<std::shared_ptr<PyDict>>();
        const auto& y = *b.get<std::shared_ptr<PyDict>>();
        if (x.entries.size() != y.entries.size()) return false;
        for (const auto& [k, val] : x.entries) {
          auto it = y.index.find(hash_key(k));
          if (it == y.index.end() || !eq(val, y.entries[it->second].second)) return false;
        }
        return true;
      }
      case 8: return a.get<std::shared_ptr<Function>>() == b.get<std::shared_ptr<Function>>();
      case 9: return a.get<Builtin>().id == b.get<Builtin>().id;
      case 12: {
        const auto& x = a.get<Range>();
        const auto& y = b.get<Range>();
        return x.start == y.start && x.stop == y.stop && x.step == y.step;
      }
      case 13: return a.get<ExcType>().name == b.get<ExcType>().name;
      default: return false;
    }
  }
  bool seq_eq(const std::vector<PyVal>& a, const std::vector<PyVal>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!eq(a[i], b[i])) return false;
    return true;
  }

  // Three-way ordering; raises TypeError for unorderable operands.
  int compare(const PyVal& a, const PyVal& b, std::string_view op) {
    tick();
    if (is_number(a) && is_number(b)) {
      if (is_intlike(a) && is_intlike(b)) {
        auto x = as_int(a), y = as_int(b);
        return x < y ? -1 : x > y ? 1 : 0;
      }
      double x = as_double(a), y = as_double(b);
      if (std::isnan(x) || std::isnan(y)) return 2;  // unordered
      return x < y ? -1 : x > y ? 1 : 0;
    }
    if (a.is<std::string>() && b.is<std::string>()) {
      int c = a.get<std::string>().compare(b.get<std::string>());
      return c < 0 ? -1 : c > 0 ? 1 : 0;
    }
    const std::vector<PyVal>* x = nullptr;
    const std::vector<PyVal>* y = nullptr;
    if (a.is<std::shared_ptr<PyList>>() && b.is<std::shared_ptr<PyList>>()) {
      x = &a.get<std::shared_ptr<PyList>>()->items;
      y = &b.get<std::shared_ptr<PyList>>()->items;
    } else if (a.is<std::shared_ptr<PyTuple>>() && b.is<std::shared_ptr<PyTuple>>()) {
      x = &a.get<std::shared_ptr<PyTuple>>()->items;
      y = &b.get<std::shared_ptr<PyTuple>>()->items;
    }
    if (x) {
      for (std::size_t i = 0; i < x->size() && i < y->size(); ++i) {
        if (!eq((*x)[i], (*y)[i])) return compare((*x)[i], (*y)[i], op);
      }
      return x->size() < y->size() ? -1 : x->size() > y->size() ? 1 : 0;
    }
    raise("TypeError", "'" + std::string(op) + "' not supported between instances of '" + type_name(a) +
                           "' and '" + type_name(b) + "'");
  }

  bool less(const PyVal& a, const PyVal& b) { return compare(a, b, "<") == -1; }

  bool contains(const PyVal& container, const PyVal& item) {
    if (container.is<std::string>()) {
      if (!item.is<std::string>())
        raise("TypeError", "'in <string>' requires string as left operand, not " + type_name(item));
      return container.get<std::string>().find(item.get<std::string>()) != std::string::npos;
    }
    if (container.is<std::shared_ptr<PyDict>>()) {
      const auto& d = *container.get<std::shared_ptr<PyDict>>();
      return d.index.count(hash_key(item)) > 0;
    }
    if (container.is<Range>()) {
      if (!is_number(item)) return false;
      const auto& r = container.get<Range>();
      double x = as_double(item);
      if (x != std::floor(x)) return false;
      auto i = static_cast<std::int64_t>(x);
      if (r.step > 0 ? (i < r.start || i >= r.stop) : (i > r.start || i <= r.stop)) return false;
      return (i - r.start) % r.step == 0;
    }
    bool found = false;
    iterate(container, [&](const PyVal& x) {
      if (eq(x, item)) {
        found = true;
        return false;
      }
      return true;
    });
    return found;
  }

  // ---- iteration
  static std::int64_t range_len(const Range& r) {
    if (r.step > 0 && r.start < r.stop) return (r.stop - r.start - 1) / r.step + 1;
    if (r.step < 0 && r.start > r.stop) return (r.start - r.stop - 1) / (-r.step) + 1;
    return 0;
  }

  void iterate(const PyVal& v, const std::function<bool(const PyVal&)>& fn) {
    switch (v.v.index()) {
      case 4: {
        std::string s = v.get<std::string>();
        for (std::size_t i = 0; i < s.size();) {
          std::size_t n = utf8_len(static_cast<unsigned char>(s[i]));
          tick();
          if (!fn(PyVal(s.substr(i, n)))) return;
          i += n;
        }
        return;
      }
      case 5: {
        auto list = v.get<std::shared_ptr<PyList>>();
        for (std::size_t i = 0; i < list->items.size(); ++i) {
          tick();
          PyVal item = list->items[i];
          if (!fn(item)) return;
        }
        return;
      }
      case 6: {
        auto tup = v.get<std::shared_ptr<PyTuple>>();
        for (const auto& item : tup->items) {
          tick();
          if (!fn(item)) return;
        }
        return;
      }
      case 7: {
        auto dict = v.get<std::shared_ptr<PyDict>>();
        std::vector<PyVal> keys;
        for (const auto& e : dict->entries) keys.push_back(e.first);
        for (const auto& k : keys) {
          tick();
          if (!fn(k)) return;
        }
        return;
      }
      case 12: {
        const auto r = v.get<Range>();
        auto n = range_len(r);
        for (std::int64_t i = 0; i < n; ++i) {
          tick();
          if (!fn(PyVal(static_cast<std::int64_t>(r.start + i * r.step)))) return;
        }
        return;
      }
      default:
        raise("TypeError", "'" + type_name(v) + "' object is not iterable");
    }
  }

  static std::size_t utf8_len(unsigned char c) {
    if (c < 0x80) return 1;
    if ((c >> 5) == 0x6) return 2;
    if ((c >> 4) == 0xE) return 3;
    if ((c >> 3) == 0x1E) return 4;
    return 1;
  }

  std::vector<PyVal> to_vector(const PyVal& v) {
    if (v.is<Range>()) check_items(static_cast<std::size_t>(range_len(v.get<Range>())));
    std::vector<PyVal> out;
    iterate(v, [&](const PyVal& x) {
      out.push_back(x);
      if (out.size() > max_items) check_items(out.size());
      return true;
    });
    return out;
  }

  static PyVal make_list(std::vector<PyVal> items) {
    auto l = std::make_shared<PyList>();
    l->items = std::move(items);
    return PyVal(std::move(l));
  }
  static PyVal make_tuple(std::vector<PyVal> items) {
    auto t = std::make_shared<PyTuple>();
    t->items = std::move(items);
    return PyVal(std::move(t));
  }
  void dict_set(PyDict& d, const PyVal& k, PyVal v) {
    auto key = hash_key(k);
    auto it = d.index.find(key);
    if (it != d.index.end()) {
      d.entries[it->second].second = std::move(v);
      return;
    }
    check_items(d.entries.size() + 1);
    d.index.emplace(std::move(key), d.entries.size());
    d.entries.emplace_back(k, std::move(v));
  }
  void dict_reindex(PyDict& d) {
    d.index.clear();
    for (std::size_t i = 0; i < d.entries.size(); ++i) d.index.emplace(hash_key(d.entries[i].first), i);
  }

  // ---- arithmetic
  PyVal binop(const std::string& op, const PyVal& a, const PyVal& b) {
    tick();
    if (is_intlike(a) && is_intlike(b)) return int_binop(op, as_int(a), as_int(b));
    if (is_number(a) && is_number(b) && op != "<<" && op != ">>" && op != "&" && op != "|" && op != "^")
      return float_binop(op, as_double(a), as_double(b));
    if (op == "+") {
      if (a.is<std::string>() && b.is<std::string>()) {
        check_bytes(a.get<std::string>().size() + b.get<std::string>().size());
        return PyVal(a.get<std::string>() + b.get<std::string>());
      }
      if (a.is<std::shared_ptr<PyList>>() && b.is<std::shared_ptr<PyList>>()) {
        auto items = a.get<std::shared_ptr<PyList>>()->items;
        const auto& other = b.get<std::shared_ptr<PyList>>()->items;
        check_items(items.size() + other.size());
        items.insert(items.end(), other.begin(), other.end());
        return make_list(std::move(items));
      }
      if (a.is<std::shared_ptr<PyTuple>>() && b.is<std::shared_ptr<PyTuple>>()) {
        auto items = a.get<std::shared_ptr<PyTuple>>()->items;
        const auto& other = b.get<std::shared_ptr<PyTuple>>()->items;
        check_items(items.size() + other.size());
        items.insert(items.end(), other.begin(), other.end());
        return make_tuple(std::move(items));
      }
    }
    if (op == "*") {
      if (is_intlike(a) && !is_number(b)) return repeat(b, as_int(a));
      if (is_intlike(b) && !is_number(a)) return repeat(a, as_int(b));
    }
    if (op == "|" && a.is<std::shared_ptr<PyDict>>() && b.is<std::shared_ptr<PyDict>>()) {
      auto d = std::make_shared<PyDict>(*a.get<std::shared_ptr<PyDict>>());
      for (const auto& [k, v] : b.get<std::shared_ptr<PyDict>>()->entries) dict_set(*d, k, v);
      return PyVal(std::move(d));
    }
    raise("TypeError", "unsupported operand type(s) for " + op + ": '" + type_name(a) + "' and '" +
                           type_name(b) + "'");
  }

  PyVal repeat(const PyVal& seq, std::int64_t n) {
    if (n < 0) n = 0;
    if (seq.is<std::string>()) {
      const auto& s = seq.get<std::string>();
      if (!s.empty() && static_cast<std::size_t>(n) > max_bytes / s.size()) check_bytes(max_bytes + 1);
      std::string out;
      out.reserve(s.size() * static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) out += s;
      return PyVal(std::move(out));
    }
    const std::vector<PyVal>* items = nullptr;
    if (seq.is<std::shared_ptr<PyList>>()) items = &seq.get<std::shared_ptr<PyList>>()->items;
    else if (seq.is<std::shared_ptr<PyTuple>>()) items = &seq.get<std::shared_ptr<PyTuple>>()->items;
    else raise("TypeError", "can't multiply sequence of type '" + type_name(seq) + "'");
    if (!items->empty() && static_cast<std::size_t>(n) > max_items / items->size())
      check_items(max_items + 1);
    std::vector<PyVal> out;
    out.reserve(items->size() * static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out.insert(out.end(), items->begin(), items->end());
    return seq.is<std::shared_ptr<PyList>>() ? make_list(std::move(out)) : make_tuple(std::move(out));
  }

  static std::pair<std::int64_t, std::int64_t> int_divmod(std::int64_t a, std::int64_t b) {
    if (b == 0) raise("ZeroDivisionError", "integer division or modulo by zero");
    if (a == std::numeric_limits<std::int64_t>::min() && b == -1)
      raise("OverflowError", "integer overflow (64-bit ints)");
    std::int64_t q = a / b, r = a % b;
    if (r != 0 && ((r < 0) != (b < 0))) {
      q -= 1;
      r += b;
    }
    return {q, r};
  }

  static std::pair<double, double> float_divmod(double vx, double wx) {
    if (wx == 0.0) raise("ZeroDivisionError", "float divmod()");
    double mod = std::fmod(vx, wx);
    double div = (vx - mod) / wx;
    if (mod != 0.0) {
      if ((wx < 0) != (mod < 0)) {
        mod += wx;
        div -= 1.0;
      }
    } else {
      mod = std::copysign(0.0, wx);
    }
    double floordiv;
    if (div != 0.0) {
      floordiv = std::floor(div);
      if (div - floordiv > 0.5) floordiv += 1.0;
    } else {
      floordiv = std::copysign(0.0, vx / wx);
    }
    return {floordiv, mod};
  }

  PyVal int_binop(const std::string& op, std::int64_t a, std::int64_t b) {
    if (op == "+") return PyVal(checked_add(a, b));
    if (op == "-") return PyVal(checked_sub(a, b));
    if (op == "*") return PyVal(checked_mul(a, b));
    if (op == "/") {
      if (b == 0) raise("ZeroDivisionError", "division by zero");
      return PyVal(static_cast<double>(a) / static_cast<double>(b));
    }
    if (op == "//") return PyVal(int_divmod(a, b).first);
    if (op == "%") return PyVal(int_divmod(a, b).second);
    if (op == "**") {
      if (b < 0) {
        if (a == 0) raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
        return PyVal(std::pow(static_cast<double>(a), static_cast<double>(b)));
      }
      std::int64_t result = 1, base = a;
      while (b > 0) {
        tick();
        if (b & 1) result = checked_mul(result, base);
        b >>= 1;
        if (b) base = checked_mul(base, base);
      }
      return PyVal(result);
    }
    if (op == "&") return PyVal(a & b);
    if (op == "|") return PyVal(a | b);
    if (op == "^") return PyVal(a ^ b);
    if (op == "<<") {
      if (b < 0) raise("ValueError", "negative shift count");
      if (b >= 63 || (a != 0 && (a > (std::numeric_limits<std::int64_t>::max() >> b) ||
                                 a < (std::numeric_limits<std::int64_t>::min() >> b))))
        raise("OverflowError", "integer overflow (64-bit ints)");
      return PyVal(static_cast<std::int64_t>(static_cast<std::uint64_t>(a) << b));
    }
    if (op == ">>") {
      if (b < 0) raise("ValueError", "negative shift count");
      return PyVal(b >= 63 ? (a < 0 ? -1 : 0) : (a >> b));
    }
    raise("TypeError", "unsupported operator " + op);
  }

  PyVal float_binop(const std::string& op, double a, double b) {
    if (op == "+") return PyVal(a + b);
    if (op == "-") return PyVal(a - b);
    if (op == "*") return PyVal(a * b);
    if (op == "/") {
      if (b == 0.0) raise("ZeroDivisionError", "float division by zero");
      return PyVal(a / b);
    }
    if (op == "//") {
      if (b == 0.0) raise("ZeroDivisionError", "float floor division by zero");
      return PyVal(float_divmod(a, b).first);
    }
    if (op == "%") {
      if (b == 0.0) raise("ZeroDivisionError", "float modulo");
      return PyVal(float_divmod(a, b).second);
    }
    if (op == "**") {
      if (a == 0.0 && b < 0) raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
      if (a < 0 && b != std::floor(b)) raise("ValueError", "complex results are not supported");
      double r = std::pow(a, b);
      if (std::isinf(r) && std::isfinite(a) && std::isfinite(b)) raise("OverflowError", "(34, 'Numerical result out of range')");
      return PyVal(r);
    }
    raise("TypeError", "unsupported operand type(s) for " + op + ": 'float'");
  }

  // ---- names
  PyVal lookup(const std::string& name, const Frame& frame, int line) {
    for (Env* e = frame.env.get(); e; e = e->parent.get()) {
      auto it = e->vars.find(name);
      if (it != e->vars.end()) return it->second;
    }
    auto it = globals->vars.find(name);
    if (it != globals->vars.end()) return it->second;
    for (int i = 0; i < kGlobalBuiltinEnd; ++i)
      if (kBuiltinNames[i] == name) return PyVal(Builtin{i});
    if (is_exception_name(name)) return PyVal(ExcType{name});
    raise("NameError", "name '" + name + "' is not defined (line " + std::to_string(line) + ")");
  }

  void bind(const std::string& name, PyVal value, const Frame& frame) {
    if (frame.global_names && frame.global_names->count(name)) {
      globals->vars[name] = std::move(value);
      return;
    }
    frame.env->vars[name] = std::move(value);
  }

  // ---- attribute access
  PyVal get_attr(const PyVal& obj, const std::string& name) {
    if (obj.is<ModuleRef>()) {
      int mod = obj.get<ModuleRef>().id;
      if (mod == 0) {
        if (name == "pi") return PyVal(M_PI);
        if (name == "e") return PyVal(M_E);
        if (name == "inf") return PyVal(std::numeric_limits<double>::infinity());
        if (name == "nan") return PyVal(std::numeric_limits<double>::quiet_NaN());
        for (int i = m_gcd; i <= m_comb; ++i)
          if (kBuiltinNames[i] == name) return PyVal(Builtin{i});
      } else if (mod == 1) {
        if (name == "_exit") return PyVal(Builtin{os_exit});
        if (name == "abort") return PyVal(Builtin{os_abort});
      } else {
        for (int i = time_sleep; i <= time_perf_counter; ++i)
          if (kBuiltinNames[i] == name) return PyVal(Builtin{i});
      }
      raise("AttributeError", "module has no attribute '" + name + "'");
    }
    if (obj.is<std::string>() || obj.is<std::shared_ptr<PyList>>() || obj.is<std::shared_ptr<PyDict>>() ||
        obj.is<std::shared_ptr<PyTuple>>()) {
      auto m = std::make_shared<BoundMethod>();
      m->self = obj;
      m->name = name;
      return PyVal(std::move(m));
    }
    if (obj.is<std::shared_ptr<ExcInstance>>() && name == "args")
      return make_tuple({PyVal(obj.get<std::shared_ptr<ExcInstance>>()->message)});
    raise("AttributeError", "'" + type_name(obj) + "' object has no attribute '" + name + "'");
  }

  PyVal import_module(const std::string& name) {
    if (name == "math") return PyVal(ModuleRef{0});
    if (name == "os") return PyVal(ModuleRef{1});
    if (name == "time") return PyVal(ModuleRef{2});
    if (name == "typing" || name == "functools" || name == "sys" || name == "__future__")
      return PyVal(ModuleRef{3});
    raise("ImportError", "No module named '" + name + "'");
  }

  // ---- expression evaluation
  PyVal eval(const Expr& e, const Frame& f) {
    switch (e.kind) {
      case ExprKind::constant: return e.constant;
      case ExprKind::name: return lookup(e.name, f, e.line);
      case ExprKind::binop: {
        PyVal a = eval(*e.items[0], f);
        PyVal b = eval(*e.items[1], f);
        return binop(e.name, a, b);
      }
      case ExprKind::unary: return eval_unary(e, f);
      case ExprKind::boolop: {
        PyVal a = eval(*e.items[0], f);
        if (e.name == "and" ? !truthy(a) : truthy(a)) return a;
        return eval(*e.items[1], f);
      }
      case ExprKind::compare: return eval_compare(e, f);
      case ExprKind::call: return eval_call(e, f);
      case ExprKind::attribute: return get_attr(eval(*e.items[0], f), e.name);
      case ExprKind::subscript: {
        PyVal obj = eval(*e.items[0], f);
        if (e.items[1]->kind == ExprKind::slice) return eval_slice(obj, *e.items[1], f);
        return subscript(obj, eval(*e.items[1], f));
      }
      case ExprKind::list:
      case ExprKind::tuple: {
        std::vector<PyVal> items;
        items.reserve(e.items.size());
        for (const auto& item : e.items) items.push_back(eval(*item, f));
        return e.kind == ExprKind::list ? make_list(std::move(items)) : make_tuple(std::move(items));
      }
      case ExprKind::dict: {
        auto d = std::make_shared<PyDict>();
        for (std::size_t i = 0; i + 1 < e.items.size(); i += 2) {
          PyVal k = eval(*e.items[i], f);
          dict_set(*d, k, eval(*e.items[i + 1], f));
        }
        return PyVal(std::move(d));
      }
      case ExprKind::ifexp:
        return truthy(eval(*e.items[0], f)) ? eval(*e.items[1], f) : eval(*e.items[2], f);
      case ExprKind::lambda: {
        auto fn = std::make_shared<Function>();
        fn->name = "<lambda>";
        fn->params = &e.params;
        for (const auto& p : e.params) {
          fn->has_default.push_back(p.default_value != nullptr);
          fn->defaults.push_back(p.default_value ? eval(*p.default_value, f) : PyVal());
        }
        fn->lambda_body = e.items[0].get();
        fn->closure = f.env == globals ? nullptr : f.env;
        return PyVal(std::move(fn));
      }
      case ExprKind::listcomp: {
        std::vector<PyVal> out;
        auto scope = std::make_shared<Env>();
        scope->parent = f.env;
        Frame inner{scope, nullptr};
        comprehend(e, 0, inner, out);
        return make_list(std::move(out));
      }
      case ExprKind::slice: raise("TypeError", "slice outside subscript");
    }
    raise("RuntimeError", "unknown expression");
  }

  void comprehend(const Expr& e, std::size_t level, const Frame& f, std::vector<PyVal>& out) {
    if (level == e.comps.size()) {
      out.push_back(eval(*e.items[0], f));
      check_items(out.size());
      return;
    }
    const auto& c = e.comps[level];
    PyVal iterable = eval(*c.iter, f);
    iterate(iterable, [&](const PyVal& x) {
      assign(*c.target, x, f);
      for (const auto& cond : c.conds)
        if (!truthy(eval(*cond, f))) return true;
      comprehend(e, level + 1, f, out);
      return true;
    });
  }

  PyVal eval_unary(const Expr& e, const Frame& f) {
    PyVal v = eval(*e.items[0], f);
    if (e.name == "not") return PyVal(!truthy(v));
    if (e.name == "-") {
      if (is_intlike(v)) return PyVal(checked_sub(0, as_int(v)));
      if (v.is<double>()) return PyVal(-v.get<double>());
    } else if (e.name == "+") {
      if (is_intlike(v)) return PyVal(as_int(v));
      if (v.is<double>()) return v;
    } else if (e.name == "~") {
      if (is_intlike(v)) return PyVal(~as_int(v));
    }
    raise("TypeError", "bad operand type for unary " + e.name + ": '" + type_name(v) + "'");
  }

  PyVal eval_compare(const Expr& e, const Frame& f) {
    PyVal left = eval(*e.items[0], f);
    for (std::size_t i = 0; i < e.ops.size(); ++i) {
      PyVal right = eval(*e.items[i + 1], f);
      const auto& op = e.ops[i];
      bool r;
      if (op == "==") r = eq(left, right);
      else if (op == "!=") r = !eq(left, right);
      else if (op == "in") r = contains(right, left);
      else if (op == "not in") r = !contains(right, left);
      else if (op == "is" || op == "is not") {
        bool same = identical(left, right);
        r = op == "is" ? same : !same;
      } else {
        int c = compare(left, right, op);
        if (c == 2) r = false;
        else if (op == "<") r = c < 0;
        else if (op == ">") r = c > 0;
        else if (op == "<=") r = c <= 0;
        else r = c >= 0;
      }
      if (!r) return PyVal(false);
      left = std::move(right);
    }
    return PyVal(true);
  }

  bool identical(const PyVal& a, const PyVal& b) {
    if (a.v.index() != b.v.index()) return false;
    switch (a.v.index()) {
      case 0: return true;
      case 1: return a.get<bool>() == b.get<bool>();
      case 2: return a.get<std::int64_t>() == b.get<std::int64_t>();
      case 5: return a.get<std::shared_ptr<PyList>>() == b.get<std::shared_ptr<PyList>>();
      case 6: return a.get<std::shared_ptr<PyTuple>>() == b.get<std::shared_ptr<PyTuple>>();
      case 7: return a.get<std::shared_ptr<PyDict>>() == b.get<std::shared_ptr<PyDict>>();
      default: return eq(a, b);
    }
  }

  std::int64_t normalize_index(std::int64_t i, std::size_t size, const char* what) {
    auto n = static_cast<std::int64_t>(size);
    if (i < 0) i += n;
    if (i < 0 || i >= n) raise("IndexError", std::string(what) + " index out of range");
    return i;
  }

  PyVal subscript(const PyVal& obj, const PyVal& index) {
    tick();
    if (obj.is<std::shared_ptr<PyDict>>()) {
      const auto& d = *obj.get<std::shared_ptr<PyDict>>();
      auto it = d.index.find(hash_key(index));
      if (it == d.index.end()) raise("KeyError", repr(index));
      return d.entries[it->second].second;
    }
    if (obj.is<std::shared_ptr<PyList>>()) {
      const auto& items = obj.get<std::shared_ptr<PyList>>()->items;
      return items[normalize_index(require_int(index, "list indices"), items.size(), "list")];
    }
    if (obj.is<std::shared_ptr<PyTuple>>()) {
      const auto& items = obj.get<std::shared_ptr<PyTuple>>()->items;
      return items[normalize_index(require_int(index, "tuple indices"), items.size(), "tuple")];
    }
    if (obj.is<std::string>()) {
      const auto& s = obj.get<std::string>();
      auto i = normalize_index(require_int(index, "string indices"), s.size(), "string");
      return PyVal(s.substr(static_cast<std::size_t>(i), 1));
    }
    if (obj.is<Range>()) {
      const auto& r = obj.get<Range>();
      auto i = normalize_index(require_int(index, "range indices"), static_cast<std::size_t>(range_len(r)), "range object");
      return PyVal(static_cast<std::int64_t>(r.start + i * r.step));
    }
    raise("TypeError", "'" + type_name(obj) + "' object is not subscriptable");
  }

  // Python slice index computation.
  void slice_indices(const Expr& sl, const Frame& f, std::size_t size, std::int64_t& start, std::int64_t& stop,
                     std::int64_t& step) {
    auto n = static_cast<std::int64_t>(size);
    step = 1;
    if (sl.items[2]) {
      PyVal s = eval(*sl.items[2], f);
      if (!s.is<NoneT>()) step = require_int(s, "slice step");
    }
    if (step == 0) raise("ValueError", "slice step cannot be zero");
    auto bound = [&](const ExprPtr& ex, std::int64_t dflt) {
      if (!ex) return dflt;
      PyVal v = eval(*ex, f);
      if (v.is<NoneT>()) return dflt;
      std::int64_t i = require_int(v, "slice indices");
      if (i < 0) {
        i += n;
        if (i < 0) i = step < 0 ? -1 : 0;
      } else if (i >= n) {
        i = step < 0 ? n - 1 : n;
      }
      return i;
    };
    start = bound(sl.items[0], step < 0 ? n - 1 : 0);
    stop = bound(sl.items[1], step < 0 ? -1 : n);
  }

  PyVal eval_slice(const PyVal& obj, const Expr& sl, const Frame& f) {
    const std::vector<PyVal>* items = nullptr;
    std::size_t size = 0;
    if (obj.is<std::string>()) size = obj.get<std::string>().size();
    else if (obj.is<std::shared_ptr<PyList>>()) items = &obj.get<std::shared_ptr<PyList>>()->items;
    else if (obj.is<std::shared_ptr<PyTuple>>()) items = &obj.get<std::shared_ptr<PyTuple>>()->items;
    else raise("TypeError", "'" + type_name(obj) + "' object is not subscriptable");
    if (items) size = items->size();
    std::int64_t start, stop, step;
    slice_indices(sl, f, size, start, stop, step);
    std::vector<std::size_t> picks;
    for (std::int64_t i = start; step > 0 ? i < stop : i > stop; i += step) {
      tick();
      picks.push_back(static_cast<std::size_t>(i));
    }
    if (obj.is<std::string>()) {
      const auto& s = obj.get<std::string>();
      std::string out;
      for (auto i : picks) out += s[i];
      return PyVal(std::move(out));
    }
    std::vector<PyVal> out;
    for (auto i : picks) out.push_back((*items)[i]);
    return obj.is<std::shared_ptr<PyList>>() ? make_list(std::move(out)) : make_tuple(std::move(out));
  }

  PyVal eval_call(const Expr& e, const Frame& f) {
    PyVal callee = eval(*e.items[0], f);
    std::vector<PyVal> args;
    args.reserve(e.items.size() - 1);
    for (std::size_t i = 1; i < e.items.size(); ++i) args.push_back(eval(*e.items[i], f));
    std::vector<std::pair<std::string, PyVal>> kwargs;
    for (const auto& [k, v] : e.kwargs) kwargs.emplace_back(k, eval(*v, f));
    return call(callee, std::move(args), kwargs);
  }

  // ---- calls
  PyVal call(const PyVal& callee, std::vector<PyVal> args,
             const std::vector<std::pair<std::string, PyVal>>& kwargs = {}) {
    tick();
    if (callee.is<std::shared_ptr<Function>>())
      return call_function(*callee.get<std::shared_ptr<Function>>(), std::move(args), kwargs);
    if (callee.is<Builtin>()) return call_builtin(callee.get<Builtin>().id, args, kwargs);
    if (callee.is<std::shared_ptr<BoundMethod>>()) {
      const auto& m = *callee.get<std::shared_ptr<BoundMethod>>();
      return call_method(m.self, m.name, args, kwargs);
    }
    if (callee.is<ExcType>()) {
      auto inst = std::make_shared<ExcInstance>();
      inst->type = callee.get<ExcType>().name;
      if (!args.empty()) inst->message = str(args[0]);
      return PyVal(std::move(inst));
    }
    raise("TypeError", "'" + type_name(callee) + "' object is not callable");
  }

  PyVal call_function(const Function& fn, std::vector<PyVal> args,
                      const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    const auto& params = *fn.params;
    if (args.size() > params.size())
      raise("TypeError", fn.name + "() takes " + std::to_string(params.size()) + " positional arguments but " +
                             std::to_string(args.size()) + " were given");
    auto env = std::make_shared<Env>();
    env->parent = fn.closure;
    std::vector<bool> bound(params.size(), false);
    for (std::size_t i = 0; i < args.size(); ++i) {
      env->vars[params[i].name] = std::move(args[i]);
      bound[i] = true;
    }
    for (const auto& [k, v] : kwargs) {
      auto it = std::find_if(params.begin(), params.end(), [&](const Param& p) { return p.name == k; });
      if (it == params.end()) raise("TypeError", fn.name + "() got an unexpected keyword argument '" + k + "'");
      auto idx = static_cast<std::size_t>(it - params.begin());
      if (bound[idx]) raise("TypeError", fn.name + "() got multiple values for argument '" + k + "'");
      env->vars[k] = v;
      bound[idx] = true;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (bound[i]) continue;
      if (!fn.has_default[i])
        raise("TypeError", fn.name + "() missing required positional argument: '" + params[i].name + "'");
      env->vars[params[i].name] = fn.defaults[i];
    }
    if (++depth > max_depth) {
      --depth;
      raise("RecursionError", "maximum recursion depth exceeded");
    }
    struct DepthGuard {
      int& d;
      ~DepthGuard() { --d; }
    } guard{depth};
    check_stack();
    Frame frame{env, fn.globals};
    if (fn.lambda_body) return eval(*fn.lambda_body, frame);
    PyVal ret;
    exec_block(*fn.body, frame, ret);
    return ret;
  }

  std::optional<PyVal> kwarg(const std::vector<std::pair<std::string, PyVal>>& kwargs, std::string_view name) {
    for (const auto& [k, v] : kwargs)
      if (k == name) return v;
    return std::nullopt;
  }

  void no_kwargs(const std::vector<std::pair<std::string, PyVal>>& kwargs, std::string_view fn,
                 std::initializer_list<std::string_view> allowed = {}) {
    for (const auto& [k, v] : kwargs) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        raise("TypeError", std::string(fn) + "() got an unexpected keyword argument '" + k + "'");
    }
  }

  void arity(const std::vector<PyVal>& args, std::size_t lo, std::size_t hi, std::string_view fn) {
    if (args.size() < lo || args.size() > hi)
      raise("TypeError", std::string(fn) + "() takes " +
                             (lo == hi ? std::to_string(lo) : std::to_string(lo) + " to " + std::to_string(hi)) +
                             " arguments (" + std::to_string(args.size()) + " given)");
  }

  void sort_values(std::vector<PyVal>& items, const std::optional<PyVal>& key, bool reverse) {
    std::vector<PyVal> keys;
    if (key && !key->is<NoneT>()) {
      for (const auto& x : items) keys.push_back(call(*key, {x}));
    } else {
      keys = items;
    }
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return reverse ? less(keys[b], keys[a]) : less(keys[a], keys[b]);
    });
    std::vector<PyVal> sorted;
    sorted.reserve(items.size());
    for (auto i : order) sorted.push_back(items[i]);
    items = std::move(sorted);
  }

  PyVal min_max(const std::vector<PyVal>& args, const std::vector<std::pair<std::string, PyVal>>& kwargs,
                bool is_max) {
    const char* fname = is_max ? "max" : "min";
    no_kwargs(kwargs, fname, {"key", "default"});
    if (args.empty()) raise("TypeError", std::string(fname) + " expected at least 1 argument, got 0");
    std::vector<PyVal> items = args.size() == 1 ? to_vector(args[0]) : args;
    if (items.empty()) {
      if (auto d = kwarg(kwargs, "default")) return *d;
      raise("ValueError", std::string(fname) + "() arg is an empty sequence");
    }
    auto key = kwarg(kwargs, "key");
    auto keyof = [&](const PyVal& x) { return key && !key->is<NoneT>() ? call(*key, {x}) : x; };
    PyVal best = items[0];
    PyVal best_key = keyof(best);
    for (std::size_t i = 1; i < items.size(); ++i) {
      PyVal k = keyof(items[i]);
      if (is_max ? less(best_key, k) : less(k, best_key)) {
        best = items[i];
        best_key = std::move(k);
      }
    }
    return best;
  }

  PyVal to_int(const PyVal& v, std::int64_t base = 10) {
    if (is_intlike(v)) return PyVal(as_int(v));
    if (v.is<double>()) {
      double d = v.get<double>();
      if (std::isnan(d)) raise("ValueError", "cannot convert float NaN to integer");
      if (std::isinf(d)) raise("OverflowError", "cannot convert float infinity to integer");
      d = std::trunc(d);
      if (d >= 9.223372036854775807e18 || d < -9.223372036854775808e18)
        raise("OverflowError", "integer overflow (64-bit ints)");
      return PyVal(static_cast<std::int64_t>(d));
    }
    if (v.is<std::string>()) {
      std::string s;
      for (char c : v.get<std::string>())
        if (c != '_' && !std::isspace(static_cast<unsigned char>(c))) s += c;
      bool neg = false;
      std::size_t p = 0;
      if (p < s.size() && (s[p] == '+' || s[p] == '-')) neg = s[p++] == '-';
      std::int64_t r = 0;
      auto res = std::from_chars(s.data() + p, s.data() + s.size(), r, static_cast<int>(base));
      if (s.size() == p || res.ec != std::errc{} || res.ptr != s.data() + s.size())
        raise("ValueError", "invalid literal for int() with base " + std::to_string(base) + ": " +
                                quote_str(v.get<std::string>()));
      return PyVal(neg ? -r : r);
    }
    raise("TypeError", "int() argument must be a string or a number, not '" + type_name(v) + "'");
  }

  PyVal to_float(const PyVal& v) {
    if (is_number(v)) return PyVal(as_double(v));
    if (v.is<std::string>()) {
      std::string s;
      for (char c : v.get<std::string>())
        if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(c));
      bool neg = !s.empty() && s[0] == '-';
      std::string body = (!s.empty() && (s[0] == '-' || s[0] == '+')) ? s.substr(1) : s;
      if (body == "inf" || body == "infinity")
        return PyVal(neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity());
      if (body == "nan") return PyVal(std::numeric_limits<double>::quiet_NaN());
      double d = 0;
      auto res = std::from_chars(body.data(), body.data() + body.size(), d);
      if (body.empty() || res.ec != std::errc{} || res.ptr != body.data() + body.size())
        raise("ValueError", "could not convert string to float: " + quote_str(v.get<std::string>()));
      return PyVal(neg ? -d : d);
    }
    raise("TypeError", "float() argument must be a string or a number, not '" + type_name(v) + "'");
  }

  bool isinstance_of(const PyVal& v, const PyVal& type) {
    if (type.is<std::shared_ptr<PyTuple>>()) {
      for (const auto& t : type.get<std::shared_ptr<PyTuple>>()->items)
        if (isinstance_of(v, t)) return true;
      return false;
    }
    if (type.is<ExcType>())
      return v.is<std::shared_ptr<ExcInstance>>() &&
             exc_is_subclass(v.get<std::shared_ptr<ExcInstance>>()->type, type.get<ExcType>().name);
    if (!type.is<Builtin>()) raise("TypeError", "isinstance() arg 2 must be a type or tuple of types");
    switch (type.get<Builtin>().id) {
      case b_int: return is_intlike(v);
      case b_float: return v.is<double>();
      case b_str: return v.is<std::string>();
      case b_bool: return v.is<bool>();
      case b_list: return v.is<std::shared_ptr<PyList>>();
      case b_tuple: return v.is<std::shared_ptr<PyTuple>>();
      case b_dict: return v.is<std::shared_ptr<PyDict>>();
      default: raise("TypeError", "isinstance() arg 2 must be a type or tuple of types");
    }
  }

  PyVal call_builtin(int id, const std::vector<PyVal>& args,
                     const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    const std::string_view name = kBuiltinNames[id];
    if (id != b_print && id != b_min && id != b_max && id != b_sorted && id != b_sum && id != b_enumerate &&
        id != m_isclose && id != b_round)
      no_kwargs(kwargs, name);
    switch (id) {
      case b_abs: {
        arity(args, 1, 1, name);
        const auto& v = args[0];
        if (is_intlike(v)) {
          auto i = as_int(v);
          return PyVal(i < 0 ? checked_sub(0, i) : i);
        }
        if (v.is<double>()) return PyVal(std::fabs(v.get<double>()));
        raise("TypeError", "bad operand type for abs(): '" + type_name(v) + "'");
      }
      case b_min: return min_max(args, kwargs, false);
      case b_max: return min_max(args, kwargs, true);
      case b_len: {
        arity(args, 1, 1, name);
        const auto& v = args[0];
        if (v.is<std::string>()) return PyVal(static_cast<std::int64_t>(v.get<std::string>().size()));
        if (v.is<std::shared_ptr<PyList>>()) return PyVal(static_cast<std::int64_t>(v.get<std::shared_ptr<PyList>>()->items.size()));
        if (v.is<std::shared_ptr<PyTuple>>()) return PyVal(static_cast<std::int64_t>(v.get<std::shared_ptr<PyTuple>>()->items.size()));
        if (v.is<std::shared_ptr<PyDict>>()) return PyVal(static_cast<std::int64_t>(v.get<std::shared_ptr<PyDict>>()->entries.size()));
        if (v.is<Range>()) return PyVal(range_len(v.get<Range>()));
        raise("TypeError", "object of type '" + type_name(v) + "' has no len()");
      }
      case b_range: {
        arity(args, 1, 3, name);
        Range r{0, 0, 1};
        if (args.size() == 1) {
          r.stop = require_int(args[0], "range() argument");
        } else {
          r.start = require_int(args[0], "range() argument");
          r.stop = require_int(args[1], "range() argument");
          if (args.size() == 3) r.step = require_int(args[2], "range() argument");
        }
        if (r.step == 0) raise("ValueError", "range() arg 3 must not be zero");
        return PyVal(r);
      }
      case b_int:
        arity(args, 0, 2, name);
        if (args.empty()) return PyVal(std::int64_t{0});
        if (args.size() == 2) {
          if (!args[0].is<std::string>()) raise("TypeError", "int() can't convert non-string with explicit base");
          return to_int(args[0], require_int(args[1], "base"));
        }
        return to_int(args[0]);
      case b_float:
        arity(args, 0, 1, name);
        return args.empty() ? PyVal(0.0) : to_float(args[0]);
      case b_str:
        arity(args, 0, 1, name);
        return args.empty() ? PyVal(std::string()) : PyVal(str(args[0]));
      case b_repr:
        arity(args, 1, 1, name);
        return PyVal(repr(args[0]));
      case b_bool:
        arity(args, 0, 1, name);
        return PyVal(!args.empty() && truthy(args[0]));
      case b_list:
        arity(args, 0, 1, name);
        return make_list(args.empty() ? std::vector<PyVal>{} : to_vector(args[0]));
      case b_tuple:
        arity(args, 0, 1, name);
        return make_tuple(args.empty() ? std::vector<PyVal>{} : to_vector(args[0]));
      case b_dict: {
        arity(args, 0, 1, name);
        auto d = std::make_shared<PyDict>();
        if (!args.empty()) {
          if (args[0].is<std::shared_ptr<PyDict>>()) {
            *d = *args[0].get<std::shared_ptr<PyDict>>();
          } else {
            for (const auto& pair : to_vector(args[0])) {
              auto kv = to_vector(pair);
              if (kv.size() != 2) raise("ValueError", "dictionary update sequence element has wrong length");
              dict_set(*d, kv[0], kv[1]);
            }
          }
        }
        return PyVal(std::move(d));
      }
      case b_sorted: {
        arity(args, 1, 1, name);
        no_kwargs(kwargs, name, {"key", "reverse"});
        auto items = to_vector(args[0]);
        auto rev = kwarg(kwargs, "reverse");
        sort_values(items, kwarg(kwargs, "key"), rev && truthy(*rev));
        return make_list(std::move(items));
      }
      case b_reversed: {
        arity(args, 1, 1, name);
        auto items = to_vector(args[0]);
        std::reverse(items.begin(), items.end());
        return make_list(std::move(items));
      }
      case b_sum: {
        arity(args, 1, 2, name);
        no_kwargs(kwargs, name, {"start"});
        PyVal acc = args.size() == 2 ? args[1] : PyVal(std::int64_t{0});
        if (auto s = kwarg(kwargs, "start")) acc = *s;
        iterate(args[0], [&](const PyVal& x) {
          acc = binop("+", acc, x);
          return true;
        });
        return acc;
      }
      case b_any:
      case b_all: {
        arity(args, 1, 1, name);
        bool want = id == b_any;
        bool result = !want;
        iterate(args[0], [&](const PyVal& x) {
          if (truthy(x) == want) {
            result = want;
            return false;
          }
          return true;
        });
        return PyVal(result);
      }
      case b_enumerate: {
        arity(args, 1, 2, name);
        no_kwargs(kwargs, name, {"start"});
        std::int64_t i = args.size() == 2 ? require_int(args[1], "start") : 0;
        if (auto s = kwarg(kwargs, "start")) i = require_int(*s, "start");
        std::vector<PyVal> out;
        for (auto& x : to_vector(args[0])) out.push_back(make_tuple({PyVal(i++), std::move(x)}));
        return make_list(std::move(out));
      }
      case b_zip: {
        std::vector<std::vector<PyVal>> seqs;
        for (const auto& a : args) seqs.push_back(to_vector(a));
        std::size_t n = seqs.empty() ? 0 : std::numeric_limits<std::size_t>::max();
        for (const auto& s : seqs) n = std::min(n, s.size());
        std::vector<PyVal> out;
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<PyVal> row;
          for (const auto& s : seqs) row.push_back(s[i]);
          out.push_back(make_tuple(std::move(row)));
        }
        return make_list(std::move(out));
      }
      case b_map:
      case b_filter: {
        if (args.size() < 2) raise("TypeError", std::string(name) + "() needs a function and an iterable");
        std::vector<PyVal> out;
        if (id == b_filter) {
          for (auto& x : to_vector(args[1])) {
            bool keep = args[0].is<NoneT>() ? truthy(x) : truthy(call(args[0], {x}));
            if (keep) out.push_back(std::move(x));
          }
        } else {
          std::vector<std::vector<PyVal>> seqs;
          for (std::size_t i = 1; i < args.size(); ++i) seqs.push_back(to_vector(args[i]));
          std::size_t n = std::numeric_limits<std::size_t>::max();
          for (const auto& s : seqs) n = std::min(n, s.size());
          for (std::size_t i = 0; i < n; ++i) {
            std::vector<PyVal> call_args;
            for (const auto& s : seqs) call_args.push_back(s[i]);
            out.push_back(call(args[0], std::move(call_args)));
          }
        }
        return make_list(std::move(out));
      }
      case b_print: {
        no_kwargs(kwargs, name, {"sep", "end"});
        std::string sep = " ", end = "\n";
        if (auto s = kwarg(kwargs, "sep"); s && !s->is<NoneT>()) sep = str(*s);
        if (auto s = kwarg(kwargs, "end"); s && !s->is<NoneT>()) end = str(*s);
        std::string line;
        for (std::size_t i = 0; i < args.size(); ++i) {
          if (i) line += sep;
          line += str(args[i]);
        }
        line += end;
        if (output.size() < (64u << 10)) output += line.substr(0, (64u << 10) - output.size());
        return PyVal(NoneT{});
      }
      case b_isinstance:
        arity(args, 2, 2, name);
        return PyVal(isinstance_of(args[0], args[1]));
      case b_pow: {
        arity(args, 2, 3, name);
        if (args.size() == 3) {
          auto b = require_int(args[0], "pow() base"), e = require_int(args[1], "pow() exponent"),
               m = require_int(args[2], "pow() modulus");
          if (m == 0) raise("ValueError", "pow() 3rd argument cannot be 0");
          if (e < 0) raise("ValueError", "negative exponents are not supported with a modulus");
          __int128 result = 1, base = int_divmod(b, m).second;
          while (e > 0) {
            tick();
            if (e & 1) result = (result * base) % m;
            base = (base * base) % m;
            e >>= 1;
          }
          return PyVal(int_divmod(static_cast<std::int64_t>(result), m).second);
        }
        return binop("**", args[0], args[1]);
      }
      case b_divmod: {
        arity(args, 2, 2, name);
        if (is_intlike(args[0]) && is_intlike(args[1])) {
          auto [q, r] = int_divmod(as_int(args[0]), as_int(args[1]));
          return make_tuple({PyVal(q), PyVal(r)});
        }
        if (!is_number(args[0]) || !is_number(args[1])) raise("TypeError", "unsupported operand type(s) for divmod()");
        auto [q, r] = float_divmod(as_double(args[0]), as_double(args[1]));
        return make_tuple({PyVal(q), PyVal(r)});
      }
      case b_round: {
        arity(args, 1, 2, name);
        no_kwargs(kwargs, name, {"ndigits"});
        std::optional<PyVal> nd;
        if (args.size() == 2) nd = args[1];
        if (auto k = kwarg(kwargs, "ndigits")) nd = *k;
        const auto& v = args[0];
        if (is_intlike(v)) return PyVal(as_int(v));
        if (!v.is<double>()) raise("TypeError", "type " + type_name(v) + " doesn't define __round__");
        double d = v.get<double>();
        if (!nd || nd->is<NoneT>()) {
          if (!std::isfinite(d)) raise(std::isnan(d) ? "ValueError" : "OverflowError", "cannot convert float to integer");
          return to_int(PyVal(std::nearbyint(d)));
        }
        auto digits = require_int(*nd, "ndigits");
        double scale = std::pow(10.0, static_cast<double>(digits));
        double r = std::nearbyint(d * scale) / scale;
        return PyVal(std::isfinite(r) ? r : d);
      }
      case b_chr: {
        arity(args, 1, 1, name);
        auto cp = require_int(args[0], "chr() argument");
        if (cp < 0 || cp > 0x10FFFF) raise("ValueError", "chr() arg not in range(0x110000)");
        std::string out;
        auto u = static_cast<unsigned>(cp);
        if (u < 0x80) out += static_cast<char>(u);
        else if (u < 0x800) { out += static_cast<char>(0xC0 | (u >> 6)); out += static_cast<char>(0x80 | (u & 0x3F)); }
        else if (u < 0x10000) { out += static_cast<char>(0xE0 | (u >> 12)); out += static_cast<char>(0x80 | ((u >> 6) & 0x3F)); out += static_cast<char>(0x80 | (u & 0x3F)); }
        else { out += static_cast<char>(0xF0 | (u >> 18)); out += static_cast<char>(0x80 | ((u >> 12) & 0x3F)); out += static_cast<char>(0x80 | ((u >> 6) & 0x3F)); out += static_cast<char>(0x80 | (u & 0x3F)); }
        return PyVal(std::move(out));
      }
      case b_ord: {
        arity(args, 1, 1, name);
        if (!args[0].is<std::string>()) raise("TypeError", "ord() expected string");
        const auto& s = args[0].get<std::string>();
        if (s.empty() || utf8_len(static_cast<unsigned char>(s[0])) != s.size())
          raise("TypeError", "ord() expected a character");
        auto c0 = static_cast<unsigned char>(s[0]);
        unsigned cp = s.size() == 1 ? c0 : s.size() == 2 ? (c0 & 0x1F) : s.size() == 3 ? (c0 & 0x0F) : (c0 & 0x07);
        for (std::size_t i = 1; i < s.size(); ++i) cp = (cp << 6) | (static_cast<unsigned char>(s[i]) & 0x3F);
        return PyVal(static_cast<std::int64_t>(cp));
      }
      case m_gcd:
      case m_lcm: {
        std::int64_t acc = id == m_gcd ? 0 : 1;
        for (const auto& a : args) {
          auto x = require_int(a, name);
          x = x < 0 ? checked_sub(0, x) : x;
          if (id == m_gcd) {
            std::int64_t y = acc;
            while (y) {
              auto t = x % y;
              x = y;
              y = t;
            }
            acc = x;
          } else {
            if (x == 0 || acc == 0) {
              acc = 0;
              continue;
            }
            std::int64_t g = acc, y = x;
            while (y) {
              auto t = g % y;
              g = y;
              y = t;
            }
            acc = checked_mul(acc / g, x);
          }
        }
        return PyVal(acc);
      }
      case m_sqrt: {
        arity(args, 1, 1, name);
        if (!is_number(args[0])) raise("TypeError", "must be real number, not " + type_name(args[0]));
        double d = as_double(args[0]);
        if (d < 0) raise("ValueError", "math domain error");
        return PyVal(std::sqrt(d));
      }
      case m_isqrt: {
        arity(args, 1, 1, name);
        auto n = require_int(args[0], name);
        if (n < 0) raise("ValueError", "isqrt() argument must be nonnegative");
        auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
        while (r > 0 && static_cast<__int128>(r) * r > n) --r;
        while (static_cast<__int128>(r + 1) * (r + 1) <= n) ++r;
        return PyVal(r);
      }
      case m_floor:
      case m_ceil:
      case m_trunc: {
        arity(args, 1, 1, name);
        if (is_intlike(args[0])) return PyVal(as_int(args[0]));
        if (!args[0].is<double>()) raise("TypeError", "must be real number, not " + type_name(args[0]));
        double d = args[0].get<double>();
        return to_int(PyVal(id == m_floor ? std::floor(d) : id == m_ceil ? std::ceil(d) : std::trunc(d)));
      }
      case m_fabs:
        arity(args, 1, 1, name);
        if (!is_number(args[0])) raise("TypeError", "must be real number, not " + type_name(args[0]));
        return PyVal(std::fabs(as_double(args[0])));
      case m_log: {
        arity(args, 1, 2, name);
        if (!is_number(args[0])) raise("TypeError", "must be real number, not " + type_name(args[0]));
        double x = as_double(args[0]);
        if (x <= 0) raise("ValueError", "math domain error");
        double r = std::log(x);
        if (args.size() == 2) {
          double b = as_double(args[1]);
          if (b <= 0 || b == 1) raise("ValueError", "math domain error");
          r /= std::log(b);
        }
        return PyVal(r);
      }
      case m_exp: {
        arity(args, 1, 1, name);
        if (!is_number(args[0])) raise("TypeError", "must be real number, not " + type_name(args[0]));
        double r = std::exp(as_double(args[0]));
        if (std::isinf(r)) raise("OverflowError", "math range error");
        return PyVal(r);
      }
      case m_isclose: {
        arity(args, 2, 2, name);
        double a = as_double(args[0]), b = as_double(args[1]);
        double rel = 1e-9, abs_tol = 0.0;
        if (auto r = kwarg(kwargs, "rel_tol")) rel = as_double(*r);
        if (auto r = kwarg(kwargs, "abs_tol")) abs_tol = as_double(*r);
        if (a == b) return PyVal(true);
        double diff = std::fabs(a - b);
        return PyVal(diff <= std::max(rel * std::max(std::fabs(a), std::fabs(b)), abs_tol));
      }
      case m_factorial: {
        arity(args, 1, 1, name);
        auto n = require_int(args[0], name);
        if (n < 0) raise("ValueError", "factorial() not defined for negative values");
        std::int64_t r = 1;
        for (std::int64_t i = 2; i <= n; ++i) {
          tick();
          r = checked_mul(r, i);
        }
        return PyVal(r);
      }
      case m_prod: {
        arity(args, 1, 1, name);
        PyVal acc(std::int64_t{1});
        iterate(args[0], [&](const PyVal& x) {
          acc = binop("*", acc, x);
          return true;
        });
        return acc;
      }
      case m_comb: {
        arity(args, 2, 2, name);
        auto n = require_int(args[0], name), k = require_int(args[1], name);
        if (n < 0 || k < 0) raise("ValueError", "must be non-negative");
        if (k > n) return PyVal(std::int64_t{0});
        k = std::min(k, n - k);
        std::int64_t r = 1;
        for (std::int64_t i = 1; i <= k; ++i) {
          tick();
          __int128 t = static_cast<__int128>(r) * (n - k + i);
          t /= i;
          if (t > std::numeric_limits<std::int64_t>::max()) raise("OverflowError", "integer overflow (64-bit ints)");
          r = static_cast<std::int64_t>(t);
        }
        return PyVal(r);
      }
      case os_exit:
        arity(args, 1, 1, name);
        throw CrashSignal{static_cast<int>(require_int(args[0], "exit code"))};
      case os_abort:
        throw CrashSignal{134};
      case time_sleep: {
        arity(args, 1, 1, name);
        if (!is_number(args[0])) raise("TypeError", "sleep() argument must be a number");
        double secs = as_double(args[0]);
        if (secs < 0) raise("ValueError", "sleep length must be non-negative");
        auto until = std::chrono::steady_clock::now() +
                     std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(secs));
        if (until >= deadline) {
          std::this_thread::sleep_until(deadline);
          throw TimeoutSignal{};
        }
        std::this_thread::sleep_until(until);
        return PyVal(NoneT{});
      }
      case time_time:
        return PyVal(std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count());
      case time_perf_counter:
        return PyVal(std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count());
      default:
        raise("TypeError", "unsupported builtin");
    }
  }

  // ---- methods on builtin types
  PyVal call_method(const PyVal& self, const std::string& name, const std::vector<PyVal>& args,
                    const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    if (self.is<std::string>()) return str_method(self.get<std::string>(), name, args, kwargs);
    if (self.is<std::shared_ptr<PyList>>()) return list_method(*self.get<std::shared_ptr<PyList>>(), name, args, kwargs);
    if (self.is<std::shared_ptr<PyDict>>()) return dict_method(*self.get<std::shared_ptr<PyDict>>(), name, args, kwargs);
    if (self.is<std::shared_ptr<PyTuple>>()) {
      const auto& items = self.get<std::shared_ptr<PyTuple>>()->items;
      no_kwargs(kwargs, name);
      if (name == "count") {
        arity(args, 1, 1, name);
        std::int64_t n = 0;
        for (const auto& x : items) n += eq(x, args[0]);
        return PyVal(n);
      }
      if (name == "index") {
        arity(args, 1, 1, name);
        for (std::size_t i = 0; i < items.size(); ++i)
          if (eq(items[i], args[0])) return PyVal(static_cast<std::int64_t>(i));
        raise("ValueError", "tuple.index(x): x not in tuple");
      }
    }
    raise("AttributeError", "'" + type_name(self) + "' object has no attribute '" + name + "'");
  }

  const std::string& require_str(const PyVal& v, std::string_view what) {
    if (!v.is<std::string>()) raise("TypeError", std::string(what) + " must be str, not " + type_name(v));
    return v.get<std::string>();
  }

  PyVal str_method(const std::string& s, const std::string& name, const std::vector<PyVal>& args,
                   const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    no_kwargs(kwargs, name, {"sep", "maxsplit"});
    auto transform = [&](auto fn) {
      std::string out = s;
      for (auto& c : out) c = static_cast<char>(fn(static_cast<unsigned char>(c)));
      return PyVal(std::move(out));
    };
    auto all_chars = [&](auto pred) {
      if (s.empty()) return PyVal(false);
      for (unsigned char c : s)
        if (!pred(c)) return PyVal(false);
      return PyVal(true);
    };
    if (name == "upper") return transform(::toupper);
    if (name == "lower") return transform(::tolower);
    if (name == "isdigit") return all_chars([](unsigned char c) { return std::isdigit(c) != 0; });
    if (name == "isalpha") return all_chars([](unsigned char c) { return std::isalpha(c) != 0; });
    if (name == "isalnum") return all_chars([](unsigned char c) { return std::isalnum(c) != 0; });
    if (name == "isspace") return all_chars([](unsigned char c) { return std::isspace(c) != 0; });
    if (name == "isupper" || name == "islower") {
      bool upper = name == "isupper", any = false;
      for (unsigned char c : s) {
        if (std::isalpha(c)) {
          any = true;
          if ((std::isupper(c) != 0) != upper) return PyVal(false);
        }
      }
      return PyVal(any);
    }
    if (name == "capitalize") {
      std::string out = s;
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<char>(i == 0 ? std::toupper(static_cast<unsigned char>(out[i]))
                                          : std::tolower(static_cast<unsigned char>(out[i])));
      return PyVal(std::move(out));
    }
    if (name == "strip" || name == "lstrip" || name == "rstrip") {
      arity(args, 0, 1, name);
      std::string chars = " \t\n\r\f\v";
      if (!args.empty() && !args[0].is<NoneT>()) chars = require_str(args[0], "strip arg");
      std::size_t b = 0, e = s.size();
      if (name != "rstrip")
        while (b < e && chars.find(s[b]) != std::string::npos) ++b;
      if (name != "lstrip")
        while (e > b && chars.find(s[e - 1]) != std::string::npos) --e;
      return PyVal(s.substr(b, e - b));
    }
    if (name == "split") {
      arity(args, 0, 2, name);
      std::optional<PyVal> sep = args.empty() ? kwarg(kwargs, "sep") : std::optional<PyVal>(args[0]);
      std::int64_t maxsplit = -1;
      if (args.size() == 2) maxsplit = require_int(args[1], "maxsplit");
      if (auto m = kwarg(kwargs, "maxsplit")) maxsplit = require_int(*m, "maxsplit");
      std::vector<PyVal> parts;
      if (!sep || sep->is<NoneT>()) {
        std::size_t i = 0;
        while (i < s.size()) {
          while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
          if (i >= s.size()) break;
          if (maxsplit >= 0 && static_cast<std::int64_t>(parts.size()) == maxsplit) {
            auto rest = s.substr(i);
            while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.pop_back();
            parts.emplace_back(rest);
            break;
          }
          std::size_t j = i;
          while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
          parts.emplace_back(s.substr(i, j - i));
          i = j;
        }
      } else {
        const auto& d = require_str(*sep, "separator");
        if (d.empty()) raise("ValueError", "empty separator");
        std::size_t start = 0;
        while (true) {
          tick();
          auto pos = s.find(d, start);
          if (pos == std::string::npos || (maxsplit >= 0 && static_cast<std::int64_t>(parts.size()) == maxsplit)) {
            parts.emplace_back(s.substr(start));
            break;
          }
          parts.emplace_back(s.substr(start, pos - start));
          start = pos + d.size();
        }
      }
      return make_list(std::move(parts));
    }
    if (name == "join") {
      arity(args, 1, 1, name);
      std::string out;
      bool first = true;
      iterate(args[0], [&](const PyVal& x) {
        if (!first) out += s;
        first = false;
        out += require_str(x, "sequence item");
        check_bytes(out.size());
        return true;
      });
      return PyVal(std::move(out));
    }
    if (name == "replace") {
      arity(args, 2, 3, name);
      const auto& from = require_str(args[0], "replace arg");
      const auto& to = require_str(args[1], "replace arg");
      std::int64_t count = args.size() == 3 ? require_int(args[2], "count") : -1;
      std::string out;
      if (from.empty()) {
        for (std::size_t i = 0; i <= s.size(); ++i) {
          if (count >= 0 && static_cast<std::int64_t>(i) >= count) {
            out += s.substr(i);
            break;
          }
          out += to;
          if (i < s.size()) out += s[i];
          check_bytes(out.size());
        }
        return PyVal(std::move(out));
      }
      std::size_t start = 0;
      std::int64_t done = 0;
      while (true) {
        auto pos = s.find(from, start);
        if (pos == std::string::npos || (count >= 0 && done == count)) break;
        out += s.substr(start, pos - start) + to;
        check_bytes(out.size());
        start = pos + from.size();
        ++done;
      }
      out += s.substr(start);
      return PyVal(std::move(out));
    }
    if (name == "startswith" || name == "endswith") {
      arity(args, 1, 1, name);
      auto check = [&](const std::string& p) {
        if (p.size() > s.size()) return false;
        return name == "startswith" ? s.compare(0, p.size(), p) == 0 : s.compare(s.size() - p.size(), p.size(), p) == 0;
      };
      if (args[0].is<std::shared_ptr<PyTuple>>()) {
        for (const auto& p : args[0].get<std::shared_ptr<PyTuple>>()->items)
          if (check(require_str(p, name))) return PyVal(true);
        return PyVal(false);
      }
      return PyVal(check(require_str(args[0], name)));
    }
    if (name == "find" || name == "index" || name == "rfind") {
      arity(args, 1, 1, name);
      const auto& sub = require_str(args[0], name);
      auto pos = name == "rfind" ? s.rfind(sub) : s.find(sub);
      if (pos == std::string::npos) {
        if (name == "index") raise("ValueError", "substring not found");
        return PyVal(std::int64_t{-1});
      }
      return PyVal(static_cast<std::int64_t>(pos));
    }
    if (name == "count") {
      arity(args, 1, 1, name);
      const auto& sub = require_str(args[0], name);
      if (sub.empty()) return PyVal(static_cast<std::int64_t>(s.size() + 1));
      std::int64_t n = 0;
      for (auto pos = s.find(sub); pos != std::string::npos; pos = s.find(sub, pos + sub.size())) ++n;
      return PyVal(n);
    }
    if (name == "zfill") {
      arity(args, 1, 1, name);
      auto width = require_int(args[0], name);
      if (static_cast<std::int64_t>(s.size()) >= width) return PyVal(s);
      std::string pad(static_cast<std::size_t>(width) - s.size(), '0');
      if (!s.empty() && (s[0] == '-' || s[0] == '+')) return PyVal(s.substr(0, 1) + pad + s.substr(1));
      return PyVal(pad + s);
    }
    raise("AttributeError", "'str' object has no attribute '" + name + "'");
  }

  PyVal list_method(PyList& list, const std::string& name, const std::vector<PyVal>& args,
                    const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    if (name != "sort") no_kwargs(kwargs, name);
    auto& items = list.items;
    if (name == "append") {
      arity(args, 1, 1, name);
      check_items(items.size() + 1);
      items.push_back(args[0]);
      return PyVal(NoneT{});
    }
    if (name == "extend") {
      arity(args, 1, 1, name);
      auto more = to_vector(args[0]);
      check_items(items.size() + more.size());
      items.insert(items.end(), more.begin(), more.end());
      return PyVal(NoneT{});
    }
    if (name == "pop") {
      arity(args, 0, 1, name);
      if (items.empty()) raise("IndexError", "pop from empty list");
      auto i = args.empty() ? static_cast<std::int64_t>(items.size()) - 1
                            : normalize_index(require_int(args[0], "index"), items.size(), "pop");
      PyVal v = items[static_cast<std::size_t>(i)];
      items.erase(items.begin() + i);
      return v;
    }
    if (name == "insert") {
      arity(args, 2, 2, name);
      auto n = static_cast<std::int64_t>(items.size());
      auto i = require_int(args[0], "index");
      if (i < 0) i = std::max<std::int64_t>(0, i + n);
      i = std::min(i, n);
      check_items(items.size() + 1);
      items.insert(items.begin() + i, args[1]);
      return PyVal(NoneT{});
    }
    if (name == "remove" || name == "index") {
      arity(args, 1, 1, name);
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (eq(items[i], args[0])) {
          if (name == "index") return PyVal(static_cast<std::int64_t>(i));
          items.erase(items.begin() + static_cast<std::ptrdiff_t>(i));
          return PyVal(NoneT{});
        }
      }
      raise("ValueError", "list." + name + "(x): x not in list");
    }
    if (name == "count") {
      arity(args, 1, 1, name);
      std::int64_t n = 0;
      for (const auto& x : items) n += eq(x, args[0]);
      return PyVal(n);
    }
    if (name == "sort") {
      arity(args, 0, 0, name);
      no_kwargs(kwargs, name, {"key", "reverse"});
      auto rev = kwarg(kwargs, "reverse");
      auto copy = items;
      sort_values(copy, kwarg(kwargs, "key"), rev && truthy(*rev));
      items = std::move(copy);
      return PyVal(NoneT{});
    }
    if (name == "reverse") {
      std::reverse(items.begin(), items.end());
      return PyVal(NoneT{});
    }
    if (name == "copy") return make_list(items);
    if (name == "clear") {
      items.clear();
      return PyVal(NoneT{});
    }
    raise("AttributeError", "'list' object has no attribute '" + name + "'");
  }

  PyVal dict_method(PyDict& d, const std::string& name, const std::vector<PyVal>& args,
                    const std::vector<std::pair<std::string, PyVal>>& kwargs) {
    no_kwargs(kwargs, name);
    if (name == "get") {
      arity(args, 1, 2, name);
      auto it = d.index.find(hash_key(args[0]));
      if (it != d.index.end()) return d.entries[it->second].second;
      return args.size() == 2 ? args[1] : PyVal(NoneT{});
    }
    if (name == "keys" || name == "values" || name == "items") {
      std::vector<PyVal> out;
      for (const auto& [k, v] : d.entries) {
        if (name == "keys") out.push_back(k);
        else if (name == "values") out.push_back(v);
        else out.push_back(make_tuple({k, v}));
      }
      return make_list(std::move(out));
    }
    if (name == "pop") {
      arity(args, 1, 2, name);
      auto it = d.index.find(hash_key(args[0]));
      if (it == d.index.end()) {
        if (args.size() == 2) return args[1];
        raise("KeyError", repr(args[0]));
      }
      PyVal v = d.entries[it->second].second;
      d.entries.erase(d.entries.begin() + static_cast<std::ptrdiff_t>(it->second));
      dict_reindex(d);
      return v;
    }
    if (name == "setdefault") {
      arity(args, 1, 2, name);
      auto it = d.index.find(hash_key(args[0]));
      if (it != d.index.end()) return d.entries[it->second].second;
      PyVal v = args.size() == 2 ? args[1] : PyVal(NoneT{});
      dict_set(d, args[0], v);
      return v;
    }
    if (name == "update") {
      arity(args, 1, 1, name);
      if (!args[0].is<std::shared_ptr<PyDict>>()) raise("TypeError", "update() expects a dict");
      auto other = *args[0].get<std::shared_ptr<PyDict>>();
      for (const auto& [k, v] : other.entries) dict_set(d, k, v);
      return PyVal(NoneT{});
    }
    if (name == "copy") return PyVal(std::make_shared<PyDict>(d));
    if (name == "clear") {
      d.entries.clear();
      d.index.clear();
      return PyVal(NoneT{});
    }
    raise("AttributeError", "'dict' object has no attribute '" + name + "'");
  }

  // ---- assignment
  void assign(const Expr& target, const PyVal& value, const Frame& f) {
    switch (target.kind) {
      case ExprKind::name:
        bind(target.name, value, f);
        return;
      case ExprKind::tuple:
      case ExprKind::list: {
        auto items = to_vector(value);
        if (items.size() != target.items.size())
          raise("ValueError", items.size() < target.items.size()
                                  ? "not enough values to unpack (expected " + std::to_string(target.items.size()) +
                                        ", got " + std::to_string(items.size()) + ")"
                                  : "too many values to unpack (expected " + std::to_string(target.items.size()) + ")");
        for (std::size_t i = 0; i < items.size(); ++i) assign(*target.items[i], items[i], f);
        return;
      }
      case ExprKind::subscript: {
        PyVal obj = eval(*target.items[0], f);
        if (target.items[1]->kind == ExprKind::slice) raise("TypeError", "slice assignment is not supported");
        PyVal index = eval(*target.items[1], f);
        if (obj.is<std::shared_ptr<PyList>>()) {
          auto& items = obj.get<std::shared_ptr<PyList>>()->items;
          items[static_cast<std::size_t>(normalize_index(require_int(index, "list indices"), items.size(), "list assignment"))] = value;
          return;
        }
        if (obj.is<std::shared_ptr<PyDict>>()) {
          dict_set(*obj.get<std::shared_ptr<PyDict>>(), index, value);
          return;
        }
        raise("TypeError", "'" + type_name(obj) + "' object does not support item assignment");
      }
      default:
        raise("SyntaxError", "cannot assign");
    }
  }

  // ---- statements
  Flow exec_block(const Block& block, const Frame& f, PyVal& ret) {
    for (const auto& s : block) {
      Flow flow = exec(*s, f, ret);
      if (flow != Flow::normal) return flow;
    }
    return Flow::normal;
  }

  Flow exec(const Stmt& s, const Frame& f, PyVal& ret) {
    tick();
    switch (s.kind) {
      case StmtKind::expr:
        eval(*s.value, f);
        return Flow::normal;
      case StmtKind::assign: {
        PyVal v = eval(*s.value, f);
        for (const auto& t : s.targets) assign(*t, v, f);
        return Flow::normal;
      }
      case StmtKind::augassign: {
        const Expr& target = *s.targets[0];
        if (target.kind == ExprKind::name) {
          PyVal cur = lookup(target.name, f, s.line);
          PyVal rhs = eval(*s.value, f);
          if (s.op == "+" && cur.is<std::shared_ptr<PyList>>()) {
            auto more = to_vector(rhs);
            auto& items = cur.get<std::shared_ptr<PyList>>()->items;
            check_items(items.size() + more.size());
            items.insert(items.end(), more.begin(), more.end());
            bind(target.name, cur, f);
          } else {
            bind(target.name, binop(s.op, cur, rhs), f);
          }
        } else {
          PyVal obj = eval(*target.items[0], f);
          PyVal index = eval(*target.items[1], f);
          PyVal cur = subscript(obj, index);
          PyVal rhs = eval(*s.value, f);
          PyVal result = binop(s.op, cur, rhs);
          if (obj.is<std::shared_ptr<PyList>>()) {
            auto& items = obj.get<std::shared_ptr<PyList>>()->items;
            items[static_cast<std::size_t>(normalize_index(require_int(index, "list indices"), items.size(), "list"))] = result;
          } else if (obj.is<std::shared_ptr<PyDict>>()) {
            dict_set(*obj.get<std::shared_ptr<PyDict>>(), index, result);
          } else {
            raise("TypeError", "'" + type_name(obj) + "' object does not support item assignment");
          }
        }
        return Flow::normal;
      }
      case StmtKind::if_:
        for (std::size_t i = 0; i < s.conds.size(); ++i)
          if (truthy(eval(*s.conds[i], f))) return exec_block(s.bodies[i], f, ret);
        return exec_block(s.orelse, f, ret);
      case StmtKind::while_:
        while (truthy(eval(*s.conds[0], f))) {
          tick();
          Flow flow = exec_block(s.bodies[0], f, ret);
          if (flow == Flow::break_) break;
          if (flow == Flow::return_) return flow;
        }
        return Flow::normal;
      case StmtKind::for_: {
        PyVal iterable = eval(*s.value, f);
        Flow result = Flow::normal;
        iterate(iterable, [&](const PyVal& x) {
          assign(*s.targets[0], x, f);
          Flow flow = exec_block(s.bodies[0], f, ret);
          if (flow == Flow::break_) return false;
          if (flow == Flow::return_) {
            result = Flow::return_;
            return false;
          }
          return true;
        });
        return result;
      }
      case StmtKind::def: {
        auto fn = std::make_shared<Function>();
        fn->name = s.name;
        fn->params = &s.params;
        for (const auto& p : s.params) {
          fn->has_default.push_back(p.default_value != nullptr);
          fn->defaults.push_back(p.default_value ? eval(*p.default_value, f) : PyVal());
        }
        fn->body = &s.bodies[0];
        fn->globals = &s.globals;
        fn->closure = f.env == globals ? nullptr : f.env;
        bind(s.name, PyVal(std::move(fn)), f);
        return Flow::normal;
      }
      case StmtKind::return_:
        ret = s.value ? eval(*s.value, f) : PyVal(NoneT{});
        return Flow::return_;
      case StmtKind::pass:
      case StmtKind::global:
        return Flow::normal;
      case StmtKind::break_: return Flow::break_;
      case StmtKind::continue_: return Flow::continue_;
      case StmtKind::raise: {
        if (!s.value) {
          if (handling.empty()) raise("RuntimeError", "No active exception to reraise");
          throw handling.back();
        }
        PyVal v = eval(*s.value, f);
        if (v.is<ExcType>()) v = call(v, {});
        if (!v.is<std::shared_ptr<ExcInstance>>()) raise("TypeError", "exceptions must derive from BaseException");
        const auto& inst = *v.get<std::shared_ptr<ExcInstance>>();
        throw PyException{inst.type, inst.message};
      }
      case StmtKind::assert_:
        if (!truthy(eval(*s.value, f)))
          raise("AssertionError", s.value2 ? str(eval(*s.value2, f)) : std::string());
        return Flow::normal;
      case StmtKind::import:
        for (const auto& [mod, alias] : s.names) bind(alias, import_module(mod), f);
        return Flow::normal;
      case StmtKind::from_import: {
        PyVal mod = import_module(s.op);
        for (const auto& [n, alias] : s.names) {
          if (mod.get<ModuleRef>().id == 3) {
            bind(alias, PyVal(NoneT{}), f);
            continue;
          }
          bind(alias, get_attr(mod, n), f);
        }
        return Flow::normal;
      }
      case StmtKind::try_:
        return exec_try(s, f, ret);
    }
    return Flow::normal;
  }

  Flow exec_try(const Stmt& s, const Frame& f, PyVal& ret) {
    Flow flow;
    try {
      flow = exec_block(s.bodies[0], f, ret);
    } catch (const PyException& ex) {
      for (const auto& h : s.handlers) {
        bool match = !h.type;
        if (h.type) {
          PyVal t = eval(*h.type, f);
          std::vector<PyVal> types = t.is<std::shared_ptr<PyTuple>>() ? t.get<std::shared_ptr<PyTuple>>()->items
                                                                      : std::vector<PyVal>{t};
          for (const auto& ty : types) {
            if (!ty.is<ExcType>()) raise("TypeError", "catching classes that do not inherit from BaseException is not allowed");
            if (exc_is_subclass(ex.type, ty.get<ExcType>().name)) match = true;
          }
        }
        if (!match) continue;
        if (!h.alias.empty()) {
          auto inst = std::make_shared<ExcInstance>();
          inst->type = ex.type;
          inst->message = ex.message;
          bind(h.alias, PyVal(std::move(inst)), f);
        }
        handling.push_back(ex);
        struct Pop {
          std::vector<PyException>& h;
          ~Pop() { h.pop_back(); }
        } pop{handling};
        return exec_block(h.body, f, ret);
      }
      throw;
    }
    if (flow == Flow::normal) return exec_block(s.orelse, f, ret);
    return flow;
  }

  // ---- conversion
  PyVal from_value(const Value& v) {
    switch (v.storage().index()) {
      case 0: return PyVal(NoneT{});
      case 1: return PyVal(v.as_bool());
      case 2: return PyVal(v.as_int());
      case 3: return PyVal(v.as_float());
      case 4: return PyVal(v.as_string());
      case 5: {
        std::vector<PyVal> items;
        for (const auto& x : v.as_list()) items.push_back(from_value(x));
        return make_list(std::move(items));
      }
      case 6: {
        auto d = std::make_shared<PyDict>();
        for (const auto& [k, x] : v.as_map()) dict_set(*d, PyVal(k), from_value(x));
        return PyVal(std::move(d));
      }
      default: raise("TypeError", "sentinel values cannot be passed to candidates");
    }
  }

  Value to_value(const PyVal& v, int depth_left = 64) {
    if (depth_left == 0) raise("ValueError", "return value nested too deeply");
    switch (v.v.index()) {
      case 0: return Null{};
      case 1: return v.get<bool>();
      case 2: return v.get<std::int64_t>();
      case 3: return v.get<double>();
      case 4: return v.get<std::string>();
      case 5:
      case 6: {
        const auto& items = v.is<std::shared_ptr<PyList>>() ? v.get<std::shared_ptr<PyList>>()->items
                                                            : v.get<std::shared_ptr<PyTuple>>()->items;
        Value::List out;
        for (const auto& x : items) out.push_back(to_value(x, depth_left - 1));
        return out;
      }
      case 7: {
        Value::Map out;
        for (const auto& [k, x] : v.get<std::shared_ptr<PyDict>>()->entries) {
          if (!k.is<std::string>()) raise("TypeError", "returned dict keys must be str, not " + type_name(k));
          out.insert_or_assign(k.get<std::string>(), to_value(x, depth_left - 1));
        }
        return out;
      }
      default:
        raise("TypeError", "cannot return a value of type '" + type_name(v) + "'");
    }
  }

  // ---- guarded entry points
  void arm(const Limits& limits) {
    deadline = std::chrono::steady_clock::now() + limits.wall;
    std::size_t bytes = limits.mem_mb * (1u << 20);
    max_bytes = bytes;
    max_items = std::max<std::size_t>(bytes / 32, 16);
    max_depth = limits.max_depth;
    steps = 0;
    depth = 0;
    heap_baseline = live_heap_bytes();
    handling.clear();
    char probe;
    stack_base = &probe;
    stack_budget = 1u << 20;
    pthread_attr_t attr;
    if (pthread_getattr_np(pthread_self(), &attr) == 0) {
      void* addr = nullptr;
      std::size_t size = 0;
      if (pthread_attr_getstack(&attr, &addr, &size) == 0 && size > 0) {
        auto used = static_cast<std::size_t>(&probe - static_cast<char*>(addr));
        // `used` is the headroom between here and the stack's low end.
        stack_budget = used > (512u << 10) ? used - (512u << 10) : used / 2;
      }
      pthread_attr_destroy(&attr);
    }
  }

  template <typename Fn>
  CallResult guarded(const Limits& limits, Fn&& fn) {
    arm(limits);
    CallResult r;
    try {
      r.value = fn();
      r.outcome = Outcome::ok;
    } catch (const PyException& e) {
      r.outcome = Outcome::error;
      r.error_type = e.type;
      r.message = e.message;
    } catch (const TimeoutSignal&) {
      r.outcome = Outcome::timeout;
      r.message = "wall-clock limit exceeded";
    } catch (const CrashSignal& c) {
      r.outcome = Outcome::crash;
      r.exit_code = c.code;
      r.message = "process exit requested with code " + std::to_string(c.code);
    } catch (const std::bad_alloc&) {
      r.outcome = Outcome::error;
      r.error_type = "MemoryError";
      r.message = "out of memory";
    }
    return r;
  }
};

Interpreter::Interpreter(std::shared_ptr<const Module> module) : state_(std::make_unique<State>()) {
  state_->module = std::move(module);
}

Interpreter::~Interpreter() = default;

CallResult Interpreter::load(const Limits& limits) {
  return state_->guarded(limits, [&] {
    Frame frame{state_->globals, nullptr};
    PyVal ret;
    state_->exec_block(state_->module->body, frame, ret);
    return Value(Null{});
  });
}

bool Interpreter::has_function(std::string_view name) const {
  auto it = state_->globals->vars.find(std::string(name));
  return it != state_->globals->vars.end() && it->second.is<std::shared_ptr<Function>>();
}

CallResult Interpreter::call(std::string_view name, const std::vector<Value>& args, const Limits& limits) {
  return state_->guarded(limits, [&] {
    auto it = state_->globals->vars.find(std::string(name));
    if (it == state_->globals->vars.end())
      raise("NameError", "name '" + std::string(name) + "' is not defined");
    PyVal callee = it->second;
    std::vector<PyVal> py_args;
    for (const auto& a : args) py_args.push_back(state_->from_value(a));
    PyVal result = state_->call(callee, std::move(py_args));
    return state_->to_value(result);
  });
}

std::string Interpreter::take_output() {
  std::string out;
  out.swap(state_->output);
  return out;
}

}  // namespace nv::pysub
