#include "nv/sheets.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "nv/errors.hpp"

namespace nv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::string at_line(int line) { return "line " + std::to_string(line) + ": "; }

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

// Finds the end of one JSON-style literal token starting at `pos`.
std::size_t scan_literal(std::string_view s, std::size_t pos, int line) {
  if (pos >= s.size()) throw SheetSyntaxError(at_line(line) + "missing literal");
  char c = s[pos];
  if (c == '"' || c == '[' || c == '{') {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = pos; i < s.size(); ++i) {
      char ch = s[i];
      if (in_string) {
        if (ch == '\\') {
          ++i;
        } else if (ch == '"') {
          in_string = false;
          if (depth == 0) return i + 1;
        }
        continue;
      }
      if (ch == '"') {
        in_string = true;
      } else if (ch == '[' || ch == '{') {
        ++depth;
      } else if (ch == ']' || ch == '}') {
        if (--depth == 0) return i + 1;
        if (depth < 0) break;
      }
    }
    throw SheetSyntaxError(at_line(line) + "unterminated literal");
  }
  std::size_t i = pos;
  while (i < s.size() && s[i] != ',' && !std::isspace(static_cast<unsigned char>(s[i])) &&
         s.substr(i, 2) != "=>")
    ++i;
  return i;
}

Value parse_literal_token(std::string_view token, int line) {
  if (token == "#ERROR" || token == "#TIMEOUT" || token == "#CRASH")
    throw SheetTypeError(at_line(line) + "sentinel '" + std::string(token) +
                         "' is not a literal value");
  if (token == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (token == "Infinity") return std::numeric_limits<double>::infinity();
  if (token == "-Infinity") return -std::numeric_limits<double>::infinity();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(token);
  } catch (const nlohmann::json::exception&) {
    throw SheetSyntaxError(at_line(line) + "malformed literal '" +
                           std::string(token) + "'");
  }
  try {
    return from_json(j);
  } catch (const FormatError& e) {
    throw SheetTypeError(at_line(line) + e.what());
  }
}

bool literal_fits(const Value& v, TypeTag tag) {
  if (v.is_sentinel()) return false;
  if (tag == TypeTag::float_) return v.is_float() || v.is_int();
  return v.tag() == tag;
}

void check_literal_type(const Value& v, TypeTag tag, const std::string& where) {
  if (!literal_fits(v, tag))
    throw SheetTypeError(where + "literal " + canonical_encode(v) +
                         " does not match type " + std::string(to_string(tag)));
}

std::string render_cell(const Cell& cell) {
  if (const auto* ref = std::get_if<CellRef>(&cell))
    return "A" + std::to_string(ref->row);
  return canonical_encode(std::get<Value>(cell));
}

// Parses "<index>,<op>[,<cell>...][ => <literal>]" into `sheet`.
void parse_row(std::string_view text, int line, SequenceSheet& sheet) {
  auto comma = text.find(',');
  if (comma == std::string_view::npos)
    throw SheetSyntaxError(at_line(line) + "row needs '<index>,<op>'");
  Invocation inv;
  if (!parse_int(trim(text.substr(0, comma)), inv.row_index))
    throw SheetSyntaxError(at_line(line) + "row index must be an integer");
  std::size_t pos = comma + 1;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  };
  skip_ws();
  std::size_t op_end = pos;
  while (op_end < text.size() && text[op_end] != ',' &&
         !std::isspace(static_cast<unsigned char>(text[op_end])) &&
         text.substr(op_end, 2) != "=>")
    ++op_end;
  inv.operation = std::string(text.substr(pos, op_end - pos));
  if (inv.operation.empty())
    throw SheetSyntaxError(at_line(line) + "missing operation");
  pos = op_end;
  std::optional<Value> expected;
  while (true) {
    skip_ws();
    if (pos >= text.size()) break;
    if (text.substr(pos, 2) == "=>") {
      pos += 2;
      skip_ws();
      auto end = scan_literal(text, pos, line);
      expected = parse_literal_token(text.substr(pos, end - pos), line);
      pos = end;
      skip_ws();
      if (pos != text.size())
        throw SheetSyntaxError(at_line(line) + "trailing text after expected value");
      break;
    }
    if (text[pos] != ',')
      throw SheetSyntaxError(at_line(line) + "expected ',' or '=>'");
    ++pos;
    skip_ws();
    if (pos < text.size() && text[pos] == 'A' && pos + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[pos + 1]))) {
      auto end = pos + 1;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      CellRef ref;
      parse_int(text.substr(pos + 1, end - pos - 1), ref.row);
      inv.inputs.emplace_back(ref);
      pos = end;
      continue;
    }
    auto end = scan_literal(text, pos, line);
    inv.inputs.emplace_back(parse_literal_token(text.substr(pos, end - pos), line));
    pos = end;
  }
  if (expected) sheet.expected.push_back({inv.row_index, std::move(*expected)});
  sheet.rows.push_back(std::move(inv));
}

struct SheetBlock {
  int header_line;
  std::string_view header;
  std::vector<std::pair<int, std::string_view>> rows;
};

SequenceSheet parse_block(const SheetBlock& block) {
  SequenceSheet sheet;
  auto header = trim(block.header);
  const int line = block.header_line;
  if (header.substr(0, 6) != "sheet " && header.substr(0, 6) != "sheet\t")
    throw SheetSyntaxError(at_line(line) + "expected 'sheet <id> <signature>'");
  header = trim(header.substr(6));
  auto sp = header.find_first_of(" \t");
  if (sp == std::string_view::npos)
    throw SheetSyntaxError(at_line(line) + "header lacks a signature");
  sheet.sheet_id = std::string(header.substr(0, sp));
  if (!is_identifier(sheet.sheet_id))
    throw SheetSyntaxError(at_line(line) + "invalid sheet id '" + sheet.sheet_id + "'");
  try {
    sheet.signature = parse_signature(trim(header.substr(sp)));
  } catch (const SheetSyntaxError& e) {
    throw SheetSyntaxError(at_line(line) + e.what());
  }
  if (block.rows.empty())
    throw SheetSyntaxError(at_line(line) + "sheet '" + sheet.sheet_id + "' has no rows");
  for (const auto& [row_line, text] : block.rows) {
    parse_row(text, row_line, sheet);
    const auto& inv = sheet.rows.back();
    if (inv.row_index != static_cast<int>(sheet.rows.size()))
      throw SheetSyntaxError(at_line(row_line) + "row index " +
                             std::to_string(inv.row_index) + " out of sequence");
    for (const auto& cell : inv.inputs) {
      if (const auto* ref = std::get_if<CellRef>(&cell)) {
        if (ref->row < 1 || ref->row >= inv.row_index)
          throw RefError(at_line(row_line) + "A" + std::to_string(ref->row) +
                         " does not refer to an earlier row");
      }
    }
  }
  validate_sheet(sheet);
  return sheet;
}

std::vector<SheetBlock> split_blocks(std::string_view text) {
  std::vector<SheetBlock> blocks;
  int line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.substr(0, 5) == "sheet" &&
        (line.size() == 5 || std::isspace(static_cast<unsigned char>(line[5])))) {
      blocks.push_back({line_no, line, {}});
      continue;
    }
    if (blocks.empty())
      throw SheetSyntaxError(at_line(line_no) + "row before sheet header");
    blocks.back().rows.emplace_back(line_no, line);
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Python literal parsing for doctest prompts.

class PyLiteralParser {
 public:
  explicit PyLiteralParser(std::string_view text) : s_(text) {}

  Value value() {
    ws();
    if (eof()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '[' || c == '(') return sequence(c == '[' ? ']' : ')');
    if (c == '{') return dict();
    if (c == '\'' || c == '"') return string();
    if (c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c)))
      return number();
    auto word = identifier();
    if (word == "True") return true;
    if (word == "False") return false;
    if (word == "None") return Null{};
    fail("unsupported literal '" + std::string(word) + "'");
  }

  std::vector<Value> arguments(char close) {
    std::vector<Value> items;
    ws();
    if (peek(close)) {
      ++pos_;
      return items;
    }
    while (true) {
      items.push_back(value());
      ws();
      if (peek(',')) {
        ++pos_;
        ws();
        if (peek(close)) {
          ++pos_;
          return items;
        }
        continue;
      }
      if (peek(close)) {
        ++pos_;
        return items;
      }
      fail(std::string("expected ',' or '") + close + "'");
    }
  }

  std::string_view identifier() {
    ws();
    auto start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    ws();
    if (!peek(c)) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void finish() {
    ws();
    if (!eof()) fail("unexpected trailing text");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DoctestParseError(msg + " in '" + std::string(s_) + "'");
  }

 private:
  bool eof() const { return pos_ >= s_.size(); }
  bool peek(char c) const { return !eof() && s_[pos_] == c; }
  void ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  Value sequence(char close) {
    ++pos_;
    return Value::List(arguments(close));
  }

  Value dict() {
    ++pos_;
    Value::Map map;
    ws();
    if (peek('}')) {
      ++pos_;
      return map;
    }
    while (true) {
      Value key = value();
      if (!key.is_string()) fail("dict keys must be strings");
      expect(':');
      map.insert_or_assign(key.as_string(), value());
      ws();
      if (peek(',')) {
        ++pos_;
        ws();
        if (peek('}')) break;
        continue;
      }
      if (peek('}')) break;
      fail("expected ',' or '}'");
    }
    ++pos_;
    return map;
  }

  Value string() {
    char quote = s_[pos_++];
    std::string out;
    while (!eof() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) break;
      char e = s_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '0': out += '\0'; break;
        default: out += e; break;
      }
    }
    if (eof()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Value number() {
    auto start = pos_;
    bool negative = false;
    while (!eof() && (s_[pos_] == '-' || s_[pos_] == '+')) {
      if (s_[pos_] == '-') negative = !negative;
      ++pos_;
      ws();
    }
    auto digits_start = pos_;
    bool is_float = false;
    while (!eof()) {
      char c = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '_') {
        ++pos_;
      } else if (c == '.' || c == 'e' || c == 'E') {
        is_float = true;
        ++pos_;
        if ((c == 'e' || c == 'E') && !eof() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
      } else {
        break;
      }
    }
    std::string digits;
    for (char c : s_.substr(digits_start, pos_ - digits_start))
      if (c != '_') digits += c;
    if (digits.empty()) {
      pos_ = start;
      fail("malformed number");
    }
    if (is_float) {
      double d = 0;
      auto res = std::from_chars(digits.data(), digits.data() + digits.size(), d);
      if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size())
        fail("malformed float '" + digits + "'");
      return negative ? -d : d;
    }
    std::int64_t i = 0;
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size())
      fail("integer '" + digits + "' out of range");
    return negative ? -i : i;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

bool map_annotation(std::string_view ann, TypeTag& out) {
  ann = trim(ann);
  auto bracket = ann.find('[');
  auto base = trim(ann.substr(0, bracket));
  if (auto dot = base.rfind('.'); dot != std::string_view::npos) base = base.substr(dot + 1);
  if (base == "int") out = TypeTag::int_;
  else if (base == "float") out = TypeTag::float_;
  else if (base == "str") out = TypeTag::string;
  else if (base == "bool") out = TypeTag::bool_;
  else if (base == "list" || base == "List" || base == "tuple" || base == "Tuple" ||
           base == "Sequence")
    out = TypeTag::list;
  else if (base == "dict" || base == "Dict" || base == "Mapping")
    out = TypeTag::map;
  else if (base == "None") out = TypeTag::null;
  else return false;
  return true;
}

// Splits on commas that are not nested in brackets.
std::vector<std::string_view> split_top_level(std::string_view s) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '[' || c == '(' || c == '{') ++depth;
    else if (c == ']' || c == ')' || c == '}') --depth;
    else if (c == ',' && depth == 0) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  if (!trim(s.substr(start)).empty() || !parts.empty()) parts.push_back(s.substr(start));
  return parts;
}

MethodSignature parse_def_line(std::string_view line) {
  // def name(params) -> ret:
  line = trim(line.substr(3));
  auto open = line.find('(');
  auto close = line.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw PromptParseError("malformed def line: '" + std::string(line) + "'");
  MethodSignature sig;
  sig.name = std::string(trim(line.substr(0, open)));
  if (!is_identifier(sig.name))
    throw PromptParseError("invalid function name '" + sig.name + "'");
  for (auto param : split_top_level(line.substr(open + 1, close - open - 1))) {
    param = trim(param);
    if (param.empty()) continue;
    if (auto eq = param.find('='); eq != std::string_view::npos) param = param.substr(0, eq);
    auto colon = param.find(':');
    TypeTag tag;
    if (colon == std::string_view::npos || !map_annotation(param.substr(colon + 1), tag))
      throw PromptParseError("parameter '" + std::string(trim(param)) +
                             "' needs an int/float/str/bool/list/dict/None annotation");
    sig.param_types.push_back(tag);
  }
  auto rest = trim(line.substr(close + 1));
  if (rest.substr(0, 2) != "->")
    throw PromptParseError("function '" + sig.name + "' needs a return annotation");
  rest = trim(rest.substr(2));
  if (!rest.empty() && rest.back() == ':') rest.remove_suffix(1);
  if (!map_annotation(rest, sig.return_type))
    throw PromptParseError("unsupported return annotation '" + std::string(rest) + "'");
  return sig;
}

std::string_view strip_docstring_quotes(std::string_view s) {
  s = trim(s);
  for (std::string_view q : {"\"\"\"", "'''"}) {
    if (s.size() >= 3 && s.substr(s.size() - 3) == q) s = trim(s.substr(0, s.size() - 3));
    if (s.size() >= 3 && s.substr(0, 3) == q) s = trim(s.substr(3));
  }
  return s;
}

}  // namespace

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

std::string render_signature(const MethodSignature& sig) {
  std::string out = sig.name + "(";
  for (std::size_t i = 0; i < sig.param_types.size(); ++i) {
    if (i) out += ',';
    out += to_string(sig.param_types[i]);
  }
  out += ")->";
  out += to_string(sig.return_type);
  return out;
}

MethodSignature parse_signature(std::string_view text) {
  text = trim(text);
  auto open = text.find('(');
  auto close = text.find(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    throw SheetSyntaxError("malformed signature '" + std::string(text) + "'");
  MethodSignature sig;
  sig.name = std::string(trim(text.substr(0, open)));
  if (!is_identifier(sig.name))
    throw SheetSyntaxError("invalid method name '" + sig.name + "'");
  auto params = trim(text.substr(open + 1, close - open - 1));
  if (!params.empty()) {
    std::size_t start = 0;
    while (true) {
      auto comma = params.find(',', start);
      auto tag_text = trim(params.substr(start, comma == std::string_view::npos
                                                    ? std::string_view::npos
                                                    : comma - start));
      TypeTag tag;
      if (!parse_type_tag(tag_text, tag))
        throw SheetTypeError("unknown type tag '" + std::string(tag_text) + "'");
      sig.param_types.push_back(tag);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  auto rest = trim(text.substr(close + 1));
  if (rest.substr(0, 2) != "->")
    throw SheetSyntaxError("signature lacks '->' return type");
  auto ret = trim(rest.substr(2));
  if (!parse_type_tag(ret, sig.return_type))
    throw SheetTypeError("unknown type tag '" + std::string(ret) + "'");
  return sig;
}

void validate_sheet(const SequenceSheet& sheet) {
  if (!is_identifier(sheet.sheet_id))
    throw SheetSyntaxError("invalid sheet id '" + sheet.sheet_id + "'");
  if (!is_identifier(sheet.signature.name))
    throw SheetSyntaxError("invalid method name '" + sheet.signature.name + "'");
  if (sheet.rows.empty())
    throw SheetSyntaxError("sheet '" + sheet.sheet_id + "' has no rows");
  for (std::size_t i = 0; i < sheet.rows.size(); ++i) {
    const auto& inv = sheet.rows[i];
    const std::string where = "sheet '" + sheet.sheet_id + "' row " +
                              std::to_string(inv.row_index) + ": ";
    if (inv.row_index != static_cast<int>(i) + 1)
      throw SheetSyntaxError(where + "row indices must be 1..n in order");
    const bool create = inv.operation == kCreateOp;
    if (!create && inv.operation != sheet.signature.name)
      throw SheetSyntaxError(where + "operation '" + inv.operation +
                             "' must be '" + sheet.signature.name + "' or '$create'");
    if (!create && inv.inputs.size() != sheet.signature.param_types.size())
      throw SheetTypeError(where + "expected " +
                           std::to_string(sheet.signature.param_types.size()) +
                           " inputs, got " + std::to_string(inv.inputs.size()));
    for (std::size_t k = 0; k < inv.inputs.size(); ++k) {
      const auto& cell = inv.inputs[k];
      if (const auto* ref = std::get_if<CellRef>(&cell)) {
        if (ref->row < 1 || ref->row >= inv.row_index)
          throw RefError(where + "A" + std::to_string(ref->row) +
                         " does not refer to an earlier row");
      } else if (!create) {
        check_literal_type(std::get<Value>(cell), sheet.signature.param_types[k], where);
      } else if (std::get<Value>(cell).is_sentinel()) {
        throw SheetTypeError(where + "sentinels are not literals");
      }
    }
  }
  int last = 0;
  for (const auto& a : sheet.expected) {
    if (a.row_index < 1 || a.row_index > static_cast<int>(sheet.rows.size()))
      throw SheetSyntaxError("sheet '" + sheet.sheet_id + "': assertion on missing row " +
                             std::to_string(a.row_index));
    if (a.row_index <= last)
      throw SheetSyntaxError("sheet '" + sheet.sheet_id + "': assertions out of order");
    last = a.row_index;
    if (sheet.rows[a.row_index - 1].operation != kCreateOp)
      check_literal_type(a.expected, sheet.signature.return_type,
                         "sheet '" + sheet.sheet_id + "' assertion: ");
  }
}

SequenceSheet parse_sheet(std::string_view text) {
  auto blocks = split_blocks(text);
  if (blocks.empty()) throw SheetSyntaxError("empty sheet text");
  if (blocks.size() > 1)
    throw SheetSyntaxError(at_line(blocks[1].header_line) +
                           "more than one sheet in single-sheet text");
  return parse_block(blocks.front());
}

std::vector<SequenceSheet> parse_sheets(std::string_view text) {
  std::vector<SequenceSheet> out;
  for (const auto& block : split_blocks(text)) out.push_back(parse_block(block));
  return out;
}

std::string render_sheet(const SequenceSheet& sheet) {
  std::string out = "sheet " + sheet.sheet_id + " " + render_signature(sheet.signature) + "\n";
  auto assertion = sheet.expected.begin();
  for (const auto& inv : sheet.rows) {
    out += std::to_string(inv.row_index);
    out += ',';
    out += inv.operation;
    for (const auto& cell : inv.inputs) {
      out += ',';
      out += render_cell(cell);
    }
    if (assertion != sheet.expected.end() && assertion->row_index == inv.row_index) {
      out += " => ";
      out += canonical_encode(assertion->expected);
      ++assertion;
    }
    out += '\n';
  }
  return out;
}

nlohmann::json sheet_to_json(const SequenceSheet& sheet) {
  using json = nlohmann::json;
  json rows = json::array();
  for (const auto& inv : sheet.rows) {
    json inputs = json::array();
    for (const auto& cell : inv.inputs) {
      if (const auto* ref = std::get_if<CellRef>(&cell))
        inputs.push_back({{"ref", ref->row}});
      else
        inputs.push_back({{"value", canonical_encode(std::get<Value>(cell))}});
    }
    rows.push_back({{"op", inv.operation}, {"inputs", inputs}});
  }
  json expected = json::array();
  for (const auto& a : sheet.expected)
    expected.push_back({{"row", a.row_index}, {"value", canonical_encode(a.expected)}});
  return {{"id", sheet.sheet_id},
          {"signature", render_signature(sheet.signature)},
          {"rows", rows},
          {"expected", expected}};
}

SequenceSheet sheet_from_json(const nlohmann::json& j) {
  try {
    SequenceSheet sheet;
    sheet.sheet_id = j.at("id").get<std::string>();
    sheet.signature = parse_signature(j.at("signature").get<std::string>());
    int index = 0;
    for (const auto& row : j.at("rows")) {
      Invocation inv;
      inv.row_index = ++index;
      inv.operation = row.at("op").get<std::string>();
      for (const auto& cell : row.at("inputs")) {
        if (cell.contains("ref"))
          inv.inputs.emplace_back(CellRef{cell.at("ref").get<int>()});
        else
          inv.inputs.emplace_back(
              parse_literal_token(cell.at("value").get<std::string>(), index));
      }
      sheet.rows.push_back(std::move(inv));
    }
    if (j.contains("expected")) {
      for (const auto& a : j.at("expected"))
        sheet.expected.push_back(
            {a.at("row").get<int>(), parse_literal_token(a.at("value").get<std::string>(), 0)});
    }
    validate_sheet(sheet);
    return sheet;
  } catch (const nlohmann::json::exception& e) {
    throw SheetSyntaxError(std::string("malformed JSON sheet: ") + e.what());
  }
}

Value parse_python_literal(std::string_view text) {
  PyLiteralParser p(text);
  Value v = p.value();
  p.finish();
  return v;
}

PromptTests sheets_from_prompt(std::string_view prompt) {
  auto lines = split_lines(prompt);
  PromptTests result;
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.substr(0, 4) == "def ") break;
  }
  if (i == lines.size()) throw PromptParseError("no 'def' signature line found in prompt");
  result.signature = parse_def_line(trim(lines[i]));

  int test_no = 0;
  for (++i; i < lines.size(); ++i) {
    auto line = strip_docstring_quotes(lines[i]);
    if (line.substr(0, 3) != ">>>") continue;
    auto call = trim(line.substr(3));
    // The result is the next non-blank line that is not another call.
    std::size_t j = i + 1;
    while (j < lines.size() && trim(lines[j]).empty()) ++j;
    std::string_view result_text;
    if (j < lines.size()) result_text = strip_docstring_quotes(lines[j]);
    if (j >= lines.size() || result_text.empty() || result_text.substr(0, 3) == ">>>")
      throw DoctestParseError("'>>> " + std::string(call) + "' has no result line");

    PyLiteralParser parser(call);
    auto name = parser.identifier();
    if (name != result.signature.name)
      throw DoctestParseError("doctest calls '" + std::string(name) + "', expected '" +
                              result.signature.name + "'");
    parser.expect('(');
    auto args = parser.arguments(')');
    parser.finish();

    SequenceSheet sheet;
    sheet.sheet_id = "p" + std::to_string(++test_no);
    sheet.signature = result.signature;
    Invocation inv;
    inv.row_index = 1;
    inv.operation = result.signature.name;
    for (auto& a : args) inv.inputs.emplace_back(std::move(a));
    sheet.rows.push_back(std::move(inv));
    sheet.expected.push_back({1, parse_python_literal(result_text)});
    try {
      validate_sheet(sheet);
    } catch (const Error& e) {
      throw DoctestParseError("doctest '" + std::string(call) + "': " + e.what());
    }
    result.sheets.push_back(std::move(sheet));
    i = j;
  }
  return result;
}

}  // namespace nv
