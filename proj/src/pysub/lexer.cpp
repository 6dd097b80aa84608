#include <cctype>

#include "ast.hpp"

namespace nv::pysub {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw CompileError("line " + std::to_string(line) + ": " + msg);
}

bool is_name_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

constexpr std::string_view kOps3[] = {"**=", "//=", ">>=", "<<=", "..."};
constexpr std::string_view kOps2[] = {"**", "//", "==", "!=", "<=", ">=", "<<", ">>", "->",
                                      "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", ":="};
constexpr std::string_view kOps1 = "+-*/%<>=()[]{},:.;@&|^~";

void append_utf8(std::string& out, unsigned cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  std::vector<int> indents{0};
  std::size_t i = 0;
  int line = 1;
  int depth = 0;
  bool line_start = true;

  while (i <= src.size()) {
    if (line_start && depth == 0) {
      // Measure indentation; skip blank and comment-only lines.
      int col = 0;
      std::size_t j = i;
      while (j < src.size() && (src[j] == ' ' || src[j] == '\t')) {
        col = src[j] == '\t' ? (col / 8 + 1) * 8 : col + 1;
        ++j;
      }
      if (j >= src.size()) {
        i = src.size() + 1;
        break;
      }
      if (src[j] == '#' || src[j] == '\n' || src[j] == '\r') {
        while (j < src.size() && src[j] != '\n') ++j;
        i = j + 1;
        ++line;
        continue;
      }
      if (col > indents.back()) {
        indents.push_back(col);
        out.push_back({Tok::indent, "", line});
      } else {
        while (col < indents.back()) {
          indents.pop_back();
          out.push_back({Tok::dedent, "", line});
        }
        if (col != indents.back()) fail(line, "inconsistent dedent");
      }
      i = j;
      line_start = false;
    }
    if (i >= src.size()) break;
    char c = src[i];
    if (c == '\n') {
      if (depth == 0) {
        out.push_back({Tok::newline, "", line});
        line_start = true;
      }
      ++line;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r' || c == '\f') {
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (c == '\\' && i + 1 < src.size() && (src[i + 1] == '\n' || src[i + 1] == '\r')) {
      i += src[i + 1] == '\r' ? 3 : 2;
      ++line;
      continue;
    }

    // String literal with optional prefix.
    std::size_t p = i;
    bool raw = false;
    while (p < src.size() && p - i < 2 && std::string_view("rRbBuUfF").find(src[p]) != std::string_view::npos) {
      if (src[p] == 'r' || src[p] == 'R') raw = true;
      if (src[p] == 'f' || src[p] == 'F') {
        if (p + 1 < src.size() && (src[p + 1] == '"' || src[p + 1] == '\''))
          fail(line, "f-strings are not supported");
      }
      if (src[p] == 'b' || src[p] == 'B') {
        if (p + 1 < src.size() && (src[p + 1] == '"' || src[p + 1] == '\''))
          fail(line, "bytes literals are not supported");
      }
      ++p;
    }
    if (p < src.size() && (src[p] == '"' || src[p] == '\'') &&
        (p == i || !is_name_char(src[p - 1]) || p - i <= 2)) {
      char q = src[p];
      bool triple = src.substr(p, 3) == std::string(3, q);
      std::size_t k = p + (triple ? 3 : 1);
      std::string text;
      const int start_line = line;
      while (true) {
        if (k >= src.size()) fail(start_line, "unterminated string literal");
        char ch = src[k];
        if (triple ? src.substr(k, 3) == std::string(3, q) : ch == q) {
          k += triple ? 3 : 1;
          break;
        }
        if (ch == '\n') {
          if (!triple) fail(line, "newline in string literal");
          ++line;
        }
        if (ch == '\\' && !raw && k + 1 < src.size()) {
          char e = src[k + 1];
          k += 2;
          switch (e) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            case 'r': text += '\r'; break;
            case '0': text += '\0'; break;
            case '\\': text += '\\'; break;
            case '\'': text += '\''; break;
            case '"': text += '"'; break;
            case '\n': ++line; break;
            case 'x':
            case 'u': {
              std::size_t n = e == 'x' ? 2 : 4;
              if (k + n > src.size()) fail(line, "bad escape");
              unsigned cp = std::stoul(std::string(src.substr(k, n)), nullptr, 16);
              append_utf8(text, cp);
              k += n;
              break;
            }
            default:
              text += '\\';
              text += e;
          }
          continue;
        }
        text += ch;
        ++k;
      }
      // Adjacent literals concatenate.
      if (!out.empty() && out.back().kind == Tok::string && out.back().text.size() < (1u << 30))
        out.back().text += text;
      else
        out.push_back({Tok::string, std::move(text), start_line});
      i = k;
      continue;
    }

    if (is_name_start(c)) {
      std::size_t k = i;
      while (k < src.size() && is_name_char(src[k])) ++k;
      out.push_back({Tok::name, std::string(src.substr(i, k - i)), line});
      i = k;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t k = i;
      if (c == '0' && k + 1 < src.size() && std::string_view("xXoObB").find(src[k + 1]) != std::string_view::npos) {
        k += 2;
        while (k < src.size() && (std::isxdigit(static_cast<unsigned char>(src[k])) || src[k] == '_')) ++k;
      } else {
        while (k < src.size()) {
          char d = src[k];
          if (std::isdigit(static_cast<unsigned char>(d)) || d == '_' || d == '.') {
            ++k;
          } else if ((d == 'e' || d == 'E')) {
            ++k;
            if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
          } else {
            break;
          }
        }
      }
      if (k < src.size() && (src[k] == 'j' || src[k] == 'J')) fail(line, "complex numbers are not supported");
      out.push_back({Tok::number, std::string(src.substr(i, k - i)), line});
      i = k;
      continue;
    }

    bool matched = false;
    for (auto op : kOps3) {
      if (src.substr(i, 3) == op) {
        out.push_back({Tok::op, std::string(op), line});
        i += 3;
        matched = true;
        break;
      }
    }
    if (!matched) {
      for (auto op : kOps2) {
        if (src.substr(i, 2) == op) {
          out.push_back({Tok::op, std::string(op), line});
          i += 2;
          matched = true;
          break;
        }
      }
    }
    if (!matched && kOps1.find(c) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') ++depth;
      if (c == ')' || c == ']' || c == '}') {
        if (--depth < 0) fail(line, std::string("unmatched '") + c + "'");
      }
      out.push_back({Tok::op, std::string(1, c), line});
      ++i;
      matched = true;
    }
    if (!matched) fail(line, std::string("unexpected character '") + c + "'");
  }
  if (depth > 0) fail(line, "unclosed bracket at end of input");
  if (!out.empty() && out.back().kind != Tok::newline && out.back().kind != Tok::dedent)
    out.push_back({Tok::newline, "", line});
  while (indents.size() > 1) {
    indents.pop_back();
    out.push_back({Tok::dedent, "", line});
  }
  out.push_back({Tok::end, "", line});
  return out;
}

}  // namespace nv::pysub
