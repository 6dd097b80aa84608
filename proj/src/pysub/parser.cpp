#include <charconv>
#include <cmath>

#include "ast.hpp"

namespace nv::pysub {

namespace {

class Parser {
 public:
  explicit Parser(const std::vector<Token>& toks) : t_(toks) {}

  Block program() {
    Block body;
    while (!at(Tok::end)) {
      if (accept_kind(Tok::newline)) continue;
      statement(body, nullptr);
    }
    return body;
  }

 private:
  // ---- token helpers
  const Token& cur() const { return t_[pos_]; }
  bool at(Tok k) const { return cur().kind == k; }
  bool at_op(std::string_view op) const { return cur().kind == Tok::op && cur().text == op; }
  bool at_kw(std::string_view kw) const { return cur().kind == Tok::name && cur().text == kw; }
  bool accept_kind(Tok k) {
    if (!at(k)) return false;
    ++pos_;
    return true;
  }
  bool accept_op(std::string_view op) {
    if (!at_op(op)) return false;
    ++pos_;
    return true;
  }
  bool accept_kw(std::string_view kw) {
    if (!at_kw(kw)) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw CompileError("line " + std::to_string(cur().line) + ": " + msg);
  }
  void expect_op(std::string_view op) {
    if (!accept_op(op)) fail("expected '" + std::string(op) + "'" + near());
  }
  void expect_kw(std::string_view kw) {
    if (!accept_kw(kw)) fail("expected '" + std::string(kw) + "'" + near());
  }
  std::string near() const {
    if (at(Tok::end)) return " at end of input";
    if (at(Tok::newline)) return " at end of line";
    return " near '" + cur().text + "'";
  }
  std::string name() {
    if (!at(Tok::name) || is_keyword(cur().text)) fail("expected a name" + near());
    return t_[pos_++].text;
  }
  static bool is_keyword(std::string_view s) {
    static constexpr std::string_view kws[] = {
        "and", "as", "assert", "break", "class", "continue", "def", "del", "elif", "else",
        "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda",
        "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
        "True", "False", "None", "async", "await"};
    for (auto k : kws)
      if (k == s) return true;
    return false;
  }

  ExprPtr make(ExprKind kind, int line) {
    auto e = std::make_unique<Expr>();
    e->kind = kind;
    e->line = line;
    return e;
  }
  StmtPtr make_stmt(StmtKind kind, int line) {
    auto s = std::make_unique<Stmt>();
    s->kind = kind;
    s->line = line;
    return s;
  }

  // ---- statements
  // `globals` collects `global` declarations of the enclosing def.
  void statement(Block& out, std::unordered_set<std::string>* globals) {
    const int line = cur().line;
    if (at_kw("if")) return out.push_back(if_stmt(globals));
    if (at_kw("while")) {
      ++pos_;
      auto s = make_stmt(StmtKind::while_, line);
      s->conds.push_back(expression());
      expect_op(":");
      s->bodies.push_back(block(globals));
      if (accept_kw("else")) fail("while/else is not supported");
      return out.push_back(std::move(s));
    }
    if (at_kw("for")) {
      ++pos_;
      auto s = make_stmt(StmtKind::for_, line);
      s->targets.push_back(target_list());
      expect_kw("in");
      s->value = expression_list();
      expect_op(":");
      s->bodies.push_back(block(globals));
      if (at_kw("else")) fail("for/else is not supported");
      return out.push_back(std::move(s));
    }
    if (at_kw("def")) return out.push_back(def_stmt());
    if (at_kw("try")) return out.push_back(try_stmt(globals));
    if (at_op("@")) fail("decorators are not supported");
    for (auto kw : {"class", "with", "async", "yield", "nonlocal", "del"})
      if (at_kw(kw)) fail(std::string("'") + kw + "' is not supported");
    simple_statements(out, globals);
  }

  void simple_statements(Block& out, std::unordered_set<std::string>* globals) {
    while (true) {
      out.push_back(simple_statement(globals));
      if (accept_op(";")) {
        if (at(Tok::newline)) break;
        continue;
      }
      break;
    }
    if (!accept_kind(Tok::newline) && !at(Tok::end)) fail("expected end of statement" + near());
  }

  StmtPtr simple_statement(std::unordered_set<std::string>* globals) {
    const int line = cur().line;
    if (accept_kw("pass")) return make_stmt(StmtKind::pass, line);
    if (accept_kw("break")) return make_stmt(StmtKind::break_, line);
    if (accept_kw("continue")) return make_stmt(StmtKind::continue_, line);
    if (accept_kw("return")) {
      auto s = make_stmt(StmtKind::return_, line);
      if (!at(Tok::newline) && !at_op(";") && !at(Tok::end)) s->value = expression_list();
      return s;
    }
    if (accept_kw("raise")) {
      auto s = make_stmt(StmtKind::raise, line);
      if (!at(Tok::newline) && !at_op(";") && !at(Tok::end)) s->value = expression();
      if (accept_kw("from")) expression();
      return s;
    }
    if (accept_kw("assert")) {
      auto s = make_stmt(StmtKind::assert_, line);
      s->value = expression();
      if (accept_op(",")) s->value2 = expression();
      return s;
    }
    if (accept_kw("global")) {
      auto s = make_stmt(StmtKind::global, line);
      do {
        auto n = name();
        if (globals) globals->insert(n);
        s->names.emplace_back(n, n);
      } while (accept_op(","));
      return s;
    }
    if (accept_kw("import")) {
      auto s = make_stmt(StmtKind::import, line);
      do {
        auto mod = dotted_name();
        std::string alias = mod;
        if (accept_kw("as")) alias = name();
        s->names.emplace_back(mod, alias);
      } while (accept_op(","));
      return s;
    }
    if (accept_kw("from")) {
      auto s = make_stmt(StmtKind::from_import, line);
      s->op = dotted_name();
      expect_kw("import");
      bool paren = accept_op("(");
      do {
        if (paren && at_op(")")) break;
        auto n = name();
        std::string alias = n;
        if (accept_kw("as")) alias = name();
        s->names.emplace_back(n, alias);
      } while (accept_op(","));
      if (paren) expect_op(")");
      return s;
    }

    auto first = expression_list();
    if (at_op("=")) {
      auto s = make_stmt(StmtKind::assign, line);
      check_target(*first);
      s->targets.push_back(std::move(first));
      while (accept_op("=")) {
        auto rhs = expression_list();
        if (at_op("=")) {
          check_target(*rhs);
          s->targets.push_back(std::move(rhs));
        } else {
          s->value = std::move(rhs);
        }
      }
      return s;
    }
    if (at_op(":") ) {
      // Annotated assignment: `x: int = 3`.
      ++pos_;
      expression();
      check_target(*first);
      auto s = make_stmt(StmtKind::assign, line);
      s->targets.push_back(std::move(first));
      if (accept_op("=")) {
        s->value = expression_list();
      } else {
        s->kind = StmtKind::pass;
      }
      return s;
    }
    static constexpr std::string_view aug[] = {"+=", "-=", "*=", "/=", "//=", "%=", "**=",
                                               "&=", "|=", "^=", "<<=", ">>="};
    for (auto op : aug) {
      if (accept_op(op)) {
        if (first->kind != ExprKind::name && first->kind != ExprKind::subscript)
          fail("invalid augmented assignment target");
        auto s = make_stmt(StmtKind::augassign, line);
        s->op = std::string(op.substr(0, op.size() - 1));
        s->targets.push_back(std::move(first));
        s->value = expression_list();
        return s;
      }
    }
    auto s = make_stmt(StmtKind::expr, line);
    s->value = std::move(first);
    return s;
  }

  std::string dotted_name() {
    auto n = name();
    while (accept_op(".")) n += "." + name();
    return n;
  }

  void check_target(const Expr& e) {
    switch (e.kind) {
      case ExprKind::name:
      case ExprKind::subscript:
        return;
      case ExprKind::tuple:
      case ExprKind::list:
        for (const auto& item : e.items) check_target(*item);
        return;
      default:
        fail("cannot assign to expression");
    }
  }

  Block block(std::unordered_set<std::string>* globals) {
    Block body;
    if (!accept_kind(Tok::newline)) {
      simple_statements(body, globals);
      return body;
    }
    if (!accept_kind(Tok::indent)) fail("expected an indented block");
    while (!accept_kind(Tok::dedent)) {
      if (at(Tok::end)) break;
      if (accept_kind(Tok::newline)) continue;
      statement(body, globals);
    }
    return body;
  }

  StmtPtr if_stmt(std::unordered_set<std::string>* globals) {
    auto s = make_stmt(StmtKind::if_, cur().line);
    ++pos_;
    s->conds.push_back(expression());
    expect_op(":");
    s->bodies.push_back(block(globals));
    while (at_kw("elif")) {
      ++pos_;
      s->conds.push_back(expression());
      expect_op(":");
      s->bodies.push_back(block(globals));
    }
    if (accept_kw("else")) {
      expect_op(":");
      s->orelse = block(globals);
    }
    return s;
  }

  StmtPtr def_stmt() {
    auto s = make_stmt(StmtKind::def, cur().line);
    ++pos_;
    s->name = name();
    expect_op("(");
    s->params = parameters(")");
    expect_op(")");
    if (accept_op("->")) expression();
    expect_op(":");
    s->bodies.push_back(block(&s->globals));
    return s;
  }

  std::vector<Param> parameters(std::string_view close) {
    std::vector<Param> params;
    bool seen_default = false;
    while (!at_op(close)) {
      if (at_op("*") || at_op("**") || at_op("/")) fail("*args, **kwargs and '/' are not supported");
      Param p;
      p.name = name();
      if (close == ")" && accept_op(":")) expression();
      if (accept_op("=")) {
        p.default_value = expression();
        seen_default = true;
      } else if (seen_default) {
        fail("non-default parameter follows default parameter");
      }
      params.push_back(std::move(p));
      if (!accept_op(",")) break;
    }
    return params;
  }

  StmtPtr try_stmt(std::unordered_set<std::string>* globals) {
    auto s = make_stmt(StmtKind::try_, cur().line);
    ++pos_;
    expect_op(":");
    s->bodies.push_back(block(globals));
    while (at_kw("except")) {
      ++pos_;
      ExceptClause h;
      if (!at_op(":")) {
        h.type = expression();
        if (accept_kw("as")) h.alias = name();
      }
      expect_op(":");
      h.body = block(globals);
      s->handlers.push_back(std::move(h));
    }
    if (accept_kw("else")) {
      expect_op(":");
      s->orelse = block(globals);
    }
    if (at_kw("finally")) fail("finally is not supported");
    if (s->handlers.empty()) fail("try without except");
    return s;
  }

  // ---- expressions
  ExprPtr target_list() {
    const int line = cur().line;
    auto first = or_expr();
    if (!at_op(",")) {
      check_target(*first);
      return first;
    }
    auto tup = make(ExprKind::tuple, line);
    tup->items.push_back(std::move(first));
    while (accept_op(",")) {
      if (at_kw("in")) break;
      tup->items.push_back(or_expr());
    }
    check_target(*tup);
    return tup;
  }

  ExprPtr expression_list() {
    const int line = cur().line;
    auto first = expression();
    if (!at_op(",")) return first;
    auto tup = make(ExprKind::tuple, line);
    tup->items.push_back(std::move(first));
    while (accept_op(",")) {
      if (at(Tok::newline) || at_op("=") || at_op(")") || at_op(";") || at(Tok::end)) break;
      tup->items.push_back(expression());
    }
    return tup;
  }

  ExprPtr expression() {
    const int line = cur().line;
    if (accept_kw("lambda")) {
      auto e = make(ExprKind::lambda, line);
      e->params = parameters(":");
      expect_op(":");
      e->items.push_back(expression());
      return e;
    }
    auto body = or_test();
    if (accept_kw("if")) {
      auto e = make(ExprKind::ifexp, line);
      auto cond = or_test();
      expect_kw("else");
      auto other = expression();
      e->items.push_back(std::move(cond));
      e->items.push_back(std::move(body));
      e->items.push_back(std::move(other));
      return e;
    }
    return body;
  }

  ExprPtr or_test() {
    auto left = and_test();
    while (at_kw("or")) {
      const int line = cur().line;
      ++pos_;
      auto e = make(ExprKind::boolop, line);
      e->name = "or";
      e->items.push_back(std::move(left));
      e->items.push_back(and_test());
      left = std::move(e);
    }
    return left;
  }

  ExprPtr and_test() {
    auto left = not_test();
    while (at_kw("and")) {
      const int line = cur().line;
      ++pos_;
      auto e = make(ExprKind::boolop, line);
      e->name = "and";
      e->items.push_back(std::move(left));
      e->items.push_back(not_test());
      left = std::move(e);
    }
    return left;
  }

  ExprPtr not_test() {
    if (at_kw("not")) {
      const int line = cur().line;
      ++pos_;
      auto e = make(ExprKind::unary, line);
      e->name = "not";
      e->items.push_back(not_test());
      return e;
    }
    return comparison();
  }

  bool comp_op(std::string& op) {
    static constexpr std::string_view ops[] = {"<", ">", "==", ">=", "<=", "!="};
    for (auto o : ops) {
      if (at_op(o)) {
        op = std::string(o);
        ++pos_;
        return true;
      }
    }
    if (at_kw("in")) {
      op = "in";
      ++pos_;
      return true;
    }
    if (at_kw("not") && t_[pos_ + 1].kind == Tok::name && t_[pos_ + 1].text == "in") {
      op = "not in";
      pos_ += 2;
      return true;
    }
    if (at_kw("is")) {
      ++pos_;
      op = accept_kw("not") ? "is not" : "is";
      return true;
    }
    return false;
  }

  ExprPtr comparison() {
    const int line = cur().line;
    auto first = or_expr();
    std::string op;
    if (!comp_op(op)) return first;
    auto e = make(ExprKind::compare, line);
    e->items.push_back(std::move(first));
    do {
      e->ops.push_back(op);
      e->items.push_back(or_expr());
    } while (comp_op(op));
    return e;
  }

  ExprPtr binary_level(int level) {
    static const std::vector<std::vector<std::string_view>> levels = {
        {"|"}, {"^"}, {"&"}, {"<<", ">>"}, {"+", "-"}, {"*", "/", "//", "%", "@"}};
    if (level == static_cast<int>(levels.size())) return factor();
    auto left = binary_level(level + 1);
    while (true) {
      bool matched = false;
      for (auto op : levels[level]) {
        if (at_op(op)) {
          if (op == "@") fail("matrix multiplication is not supported");
          const int line = cur().line;
          ++pos_;
          auto e = make(ExprKind::binop, line);
          e->name = std::string(op);
          e->items.push_back(std::move(left));
          e->items.push_back(binary_level(level + 1));
          left = std::move(e);
          matched = true;
          break;
        }
      }
      if (!matched) return left;
    }
  }

  ExprPtr or_expr() { return binary_level(0); }

  ExprPtr factor() {
    if (at_op("-") || at_op("+") || at_op("~")) {
      const int line = cur().line;
      auto e = make(ExprKind::unary, line);
      e->name = t_[pos_++].text;
      e->items.push_back(factor());
      return e;
    }
    return power();
  }

  ExprPtr power() {
    auto base = primary();
    if (at_op("**")) {
      const int line = cur().line;
      ++pos_;
      auto e = make(ExprKind::binop, line);
      e->name = "**";
      e->items.push_back(std::move(base));
      e->items.push_back(factor());
      return e;
    }
    return base;
  }

  ExprPtr primary() {
    auto e = atom();
    while (true) {
      const int line = cur().line;
      if (accept_op("(")) {
        auto call = make(ExprKind::call, line);
        call->items.push_back(std::move(e));
        while (!at_op(")")) {
          if (at_op("*") || at_op("**")) fail("argument unpacking is not supported");
          if (at(Tok::name) && t_[pos_ + 1].kind == Tok::op && t_[pos_ + 1].text == "=") {
            auto key = name();
            ++pos_;
            call->kwargs.emplace_back(key, expression());
          } else {
            auto arg = expression();
            if (at_kw("for")) arg = comprehension(std::move(arg), line);
            call->items.push_back(std::move(arg));
          }
          if (!accept_op(",")) break;
        }
        expect_op(")");
        e = std::move(call);
      } else if (accept_op("[")) {
        auto sub = make(ExprKind::subscript, line);
        sub->items.push_back(std::move(e));
        sub->items.push_back(subscript_index());
        expect_op("]");
        e = std::move(sub);
      } else if (accept_op(".")) {
        auto attr = make(ExprKind::attribute, line);
        attr->items.push_back(std::move(e));
        attr->name = name();
        e = std::move(attr);
      } else {
        return e;
      }
    }
  }

  ExprPtr subscript_index() {
    const int line = cur().line;
    ExprPtr lower;
    if (!at_op(":")) {
      lower = expression();
      if (!at_op(":")) {
        if (at_op(",")) {
          auto tup = make(ExprKind::tuple, line);
          tup->items.push_back(std::move(lower));
          while (accept_op(",") && !at_op("]")) tup->items.push_back(expression());
          return tup;
        }
        return lower;
      }
    }
    auto sl = make(ExprKind::slice, line);
    expect_op(":");
    ExprPtr upper, step;
    if (!at_op("]") && !at_op(":")) upper = expression();
    if (accept_op(":")) {
      if (!at_op("]")) step = expression();
    }
    sl->items.push_back(std::move(lower));
    sl->items.push_back(std::move(upper));
    sl->items.push_back(std::move(step));
    return sl;
  }

  ExprPtr comprehension(ExprPtr element, int line) {
    auto e = make(ExprKind::listcomp, line);
    e->items.push_back(std::move(element));
    while (accept_kw("for")) {
      Comprehension c;
      c.target = target_list();
      expect_kw("in");
      c.iter = or_test();
      while (accept_kw("if")) c.conds.push_back(or_test());
      e->comps.push_back(std::move(c));
    }
    return e;
  }

  ExprPtr number_literal(const std::string& text, int line) {
    auto e = make(ExprKind::constant, line);
    std::string digits;
    for (char c : text)
      if (c != '_') digits += c;
    if (digits.size() > 2 && digits[0] == '0' && std::string_view("xXoObB").find(digits[1]) != std::string_view::npos) {
      int base = (digits[1] == 'x' || digits[1] == 'X') ? 16 : (digits[1] == 'o' || digits[1] == 'O') ? 8 : 2;
      std::int64_t v = 0;
      auto res = std::from_chars(digits.data() + 2, digits.data() + digits.size(), v, base);
      if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size())
        throw CompileError("line " + std::to_string(line) + ": integer literal out of 64-bit range");
      e->constant = PyVal(v);
      return e;
    }
    if (digits.find_first_of(".eE") != std::string::npos) {
      double d = 0;
      auto res = std::from_chars(digits.data(), digits.data() + digits.size(), d);
      if (res.ec == std::errc::result_out_of_range) {
        d = digits.find("e-") != std::string::npos || digits.find("E-") != std::string::npos
                ? 0.0
                : HUGE_VAL;
      } else if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size()) {
        throw CompileError("line " + std::to_string(line) + ": malformed number '" + text + "'");
      }
      e->constant = PyVal(d);
      return e;
    }
    std::int64_t v = 0;
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size())
      throw CompileError("line " + std::to_string(line) +
                         ": integer literal out of 64-bit range");
    e->constant = PyVal(v);
    return e;
  }

  ExprPtr atom() {
    const Token& tok = cur();
    const int line = tok.line;
    switch (tok.kind) {
      case Tok::number:
        ++pos_;
        return number_literal(tok.text, line);
      case Tok::string: {
        ++pos_;
        auto e = make(ExprKind::constant, line);
        e->constant = PyVal(tok.text);
        return e;
      }
      case Tok::name: {
        if (tok.text == "True" || tok.text == "False" || tok.text == "None") {
          ++pos_;
          auto e = make(ExprKind::constant, line);
          if (tok.text == "None") e->constant = PyVal(NoneT{});
          else e->constant = PyVal(tok.text == "True");
          return e;
        }
        auto e = make(ExprKind::name, line);
        e->name = name();
        return e;
      }
      case Tok::op:
        if (accept_op("(")) {
          if (accept_op(")")) return make(ExprKind::tuple, line);
          auto first = expression();
          if (at_kw("for")) {
            auto comp = comprehension(std::move(first), line);
            expect_op(")");
            return comp;
          }
          if (accept_op(")")) return first;
          auto tup = make(ExprKind::tuple, line);
          tup->items.push_back(std::move(first));
          while (accept_op(",")) {
            if (at_op(")")) break;
            tup->items.push_back(expression());
          }
          expect_op(")");
          return tup;
        }
        if (accept_op("[")) {
          auto list = make(ExprKind::list, line);
          if (accept_op("]")) return list;
          auto first = expression();
          if (at_kw("for")) {
            auto comp = comprehension(std::move(first), line);
            expect_op("]");
            return comp;
          }
          list->items.push_back(std::move(first));
          while (accept_op(",")) {
            if (at_op("]")) break;
            list->items.push_back(expression());
          }
          expect_op("]");
          return list;
        }
        if (accept_op("{")) {
          auto dict = make(ExprKind::dict, line);
          while (!at_op("}")) {
            dict->items.push_back(expression());
            if (!accept_op(":")) fail("set literals are not supported");
            dict->items.push_back(expression());
            if (at_kw("for")) fail("dict comprehensions are not supported");
            if (!accept_op(",")) break;
          }
          expect_op("}");
          return dict;
        }
        if (accept_op("...")) {
          auto e = make(ExprKind::constant, line);
          e->constant = PyVal(NoneT{});
          return e;
        }
        break;
      default:
        break;
    }
    fail("unexpected token" + near());
  }

  const std::vector<Token>& t_;
  std::size_t pos_ = 0;
};

}  // namespace

Block parse_program(const std::vector<Token>& tokens) {
  Parser p(tokens);
  return p.program();
}

std::shared_ptr<const Module> compile(std::string_view source) {
  auto module = std::make_shared<Module>();
  module->body = parse_program(tokenize(source));
  return module;
}

}  // namespace nv::pysub
