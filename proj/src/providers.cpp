#include <algorithm>
#include <cmath>
#include <random>
#include <regex>

#include "nv/errors.hpp"
#include "nv/providers.hpp"

namespace nv {

namespace {

struct Template {
  const char* name;
  std::int64_t lo, hi;  // int argument range for generated tests
  std::vector<const char*> correct;
  std::vector<const char*> bugs;
};

const std::vector<Template>& templates() {
  static const std::vector<Template> all = {
      {"gcd",
       -30,
       60,
       {R"(def gcd(a, b):
    while b:
        a, b = b, a % b
    return abs(a)
)",
        R"(def gcd(a, b):
    if b == 0:
        return abs(a)
    return gcd(b, a % b)
)",
        R"(def gcd(a, b):
    a, b = abs(a), abs(b)
    if a == 0:
        return b
    if b == 0:
        return a
    while a != b:
        if a > b:
            a = a - b
        else:
            b = b - a
    return a
)"},
       {R"(def gcd(a, b):
    return a
)",
        R"(def gcd(a, b):
    while b:
        a, b = b, b % a
    return abs(a)
)",
        R"(def gcd(a, b):
    for d in range(min(a, b) - 1, 0, -1):
        if a % d == 0 and b % d == 0:
            return d
    return 1
)",
        R"(def gcd(a, b):
    while b:
        a, b = b, a % b
    return a
)"}},
      {"fib",
       0,
       40,
       {R"(def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a
)",
        R"(def fib(n):
    if n < 2:
        return n
    prev, cur = 0, 1
    i = 1
    while i < n:
        prev, cur = cur, prev + cur
        i += 1
    return cur
)"},
       {R"(def fib(n):
    a, b = 1, 1
    for _ in range(n):
        a, b = b, a + b
    return a
)",
        R"(def fib(n):
    a, b = 0, 1
    for _ in range(n - 1):
        a, b = b, a + b
    return a
)",
        R"(def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return b
)"}},
      {"is_prime",
       -5,
       120,
       {R"(def is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True
)",
        R"(def is_prime(n):
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0 or n % 3 == 0:
        return False
    k = 5
    while k * k <= n:
        if n % k == 0 or n % (k + 2) == 0:
            return False
        k += 6
    return True
)"},
       {R"(def is_prime(n):
    for d in range(2, n):
        if n % d == 0:
            return False
    return True
)",
        R"(def is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d < n:
        if n % d == 0:
            return False
        d += 1
    return True
)",
        R"(def is_prime(n):
    return n % 2 == 1
)"}},
  };
  return all;
}

std::mt19937_64 seeded(const GenerationRequest& req) {
  std::seed_seq seq{static_cast<std::uint32_t>(req.seed), static_cast<std::uint32_t>(req.seed >> 32),
                    static_cast<std::uint32_t>(req.kind), static_cast<std::uint32_t>(req.n)};
  return std::mt19937_64(seq);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

Value random_value(std::mt19937_64& rng, TypeTag tag, const Template& t) {
  auto int_in = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  switch (tag) {
    case TypeTag::int_: return Value(int_in(t.lo, t.hi));
    case TypeTag::float_: return Value(static_cast<double>(int_in(t.lo * 4, t.hi * 4)) / 4.0);
    case TypeTag::bool_: return Value(int_in(0, 1) == 1);
    case TypeTag::string: {
      std::string s;
      for (auto i = int_in(0, 5); i > 0; --i) s += static_cast<char>('a' + int_in(0, 25));
      return Value(s);
    }
    case TypeTag::list: {
      Value::List l;
      for (auto i = int_in(0, 4); i > 0; --i) l.push_back(Value(int_in(t.lo, t.hi)));
      return Value(l);
    }
    case TypeTag::map: return Value(Value::Map{{"k", Value(int_in(t.lo, t.hi))}});
    case TypeTag::null: return Value(Null{});
  }
  return Value(Null{});
}

const Template& template_for(const std::string& name) {
  for (const auto& t : templates())
    if (name == t.name) return t;
  throw ProviderUnavailableError("mock provider has no templates for function '" + name + "' (known: gcd, fib, is_prime)");
}

std::vector<std::string> mock_versions(const GenerationRequest& req, const Template& t) {
  auto rng = seeded(req);
  const auto n = static_cast<std::size_t>(req.n);
  const auto k_correct = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(n) / 3.0)));
  std::vector<std::string> items;
  auto fresh = [&](const std::string& s) {
    auto norm = normalize_source(s);
    return std::none_of(items.begin(), items.end(), [&](const std::string& x) { return normalize_source(x) == norm; });
  };

  std::vector<const char*> correct = t.correct;
  std::shuffle(correct.begin(), correct.end(), rng);
  for (std::size_t i = 0; i < std::min(k_correct, n); ++i) {
    std::string src = correct[i % correct.size()];
    if (i >= correct.size()) src = "# variant " + std::to_string(i / correct.size() + 1) + "\n" + src;
    items.push_back(src);
  }

  std::vector<const char*> bugs = t.bugs;
  std::shuffle(bugs.begin(), bugs.end(), rng);
  for (std::size_t i = 0; i < bugs.size() && items.size() < n; ++i) items.push_back(bugs[i]);

  const MutationOp ops[] = {MutationOp::operator_swap, MutationOp::boundary_shift, MutationOp::branch_negation};
  for (std::size_t attempt = 0; items.size() < n && attempt < 64 * n; ++attempt) {
    auto m = mutate(t.correct[pick(rng, t.correct.size())], ops[pick(rng, 3)], pick(rng, 6));
    if (m && fresh(*m)) items.push_back(*m);
  }
  std::shuffle(items.begin(), items.end(), rng);
  return items;
}

std::vector<std::string> mock_tests(const GenerationRequest& req, const PromptTests& prompt, const Template& t) {
  auto rng = seeded(req);
  const auto& sig = prompt.signature;
  std::vector<std::string> items;
  std::vector<std::string> seen;
  for (std::size_t attempt = 0; items.size() < static_cast<std::size_t>(req.n) && attempt < 64u * req.n; ++attempt) {
    SequenceSheet s;
    s.sheet_id = "g" + std::to_string(items.size() + 1);
    s.signature = sig;
    Invocation row{1, sig.name, {}};
    for (auto tag : sig.param_types) row.inputs.emplace_back(random_value(rng, tag, t));
    s.rows.push_back(row);
    const bool chain = !sig.param_types.empty() && sig.param_types[0] == sig.return_type && pick(rng, 3) == 0;
    if (chain) {
      Invocation second{2, sig.name, {CellRef{1}}};
      for (std::size_t i = 1; i < sig.param_types.size(); ++i)
        second.inputs.emplace_back(random_value(rng, sig.param_types[i], t));
      s.rows.push_back(second);
    }
    // Identity ignores the id so that repeated inputs count as duplicates.
    auto key = render_sheet(s);
    key = key.substr(key.find('\n'));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    items.push_back(render_sheet(s));
  }
  return items;
}

std::string_view rstrip(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(GenerationKind k) { return k == GenerationKind::versions ? "versions" : "tests"; }

bool parse_generation_kind(std::string_view text, GenerationKind& out) {
  if (text == "versions") out = GenerationKind::versions;
  else if (text == "tests") out = GenerationKind::tests;
  else return false;
  return true;
}

void validate_request(const GenerationRequest& req) {
  if (req.n < 1) throw UsageError("n must be at least 1 (got " + std::to_string(req.n) + ")");
  if (!(req.sampling.temperature >= 0)) throw UsageError("temperature must be non-negative");
  if (req.sampling.max_tokens < 1) throw UsageError("max_tokens must be at least 1");
}

std::string normalize_source(std::string_view source) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    auto nl = source.find('\n', pos);
    auto line = source.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    lines.push_back(rstrip(line));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  std::size_t first = 0, last = lines.size();
  while (first < last && lines[first].empty()) ++first;
  while (last > first && lines[last - 1].empty()) --last;
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

std::vector<std::string> dedup_normalize(const std::vector<std::string>& sources) {
  std::vector<std::string> out;
  for (const auto& s : sources) {
    auto norm = normalize_source(s);
    if (std::find(out.begin(), out.end(), norm) == out.end()) out.push_back(std::move(norm));
  }
  return out;
}

ProviderResult generate(const GenerationRequest& req, Provider& provider) {
  validate_request(req);
  auto result = provider.fetch(req);
  const auto raw = result.items.size();
  result.items = dedup_normalize(result.items);
  if (result.items.size() > static_cast<std::size_t>(req.n)) result.items.resize(static_cast<std::size_t>(req.n));
  result.provider_id = provider.id();
  result.raw_metadata["raw_items"] = raw;
  result.raw_metadata["duplicates_removed"] = raw - std::min(raw, result.items.size());
  if (result.items.empty())
    throw EmptyGenerationError("provider '" + provider.id() + "' returned no usable " +
                               std::string(to_string(req.kind)));
  return result;
}

ParsedTests parse_generated_tests(const std::vector<std::string>& items, const MethodSignature& signature,
                                  const std::string& id_prefix) {
  ParsedTests out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      auto sheet = parse_sheet(items[i]);
      if (!(sheet.signature == signature))
        throw SignatureMismatchError("signature " + render_signature(sheet.signature) + " does not match " +
                                     render_signature(signature));
      sheet.sheet_id = id_prefix + std::to_string(out.sheets.size() + 1);
      out.sheets.push_back(std::move(sheet));
    } catch (const Error& e) {
      out.rejected.push_back("item " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

ProviderResult MockProvider::fetch(const GenerationRequest& req) {
  auto prompt = sheets_from_prompt(req.prompt_text);
  const auto& t = template_for(prompt.signature.name);
  ProviderResult r;
  r.provider_id = id();
  r.items = req.kind == GenerationKind::versions ? mock_versions(req, t) : mock_tests(req, prompt, t);
  r.raw_metadata = {{"seed", req.seed}, {"function", prompt.signature.name}};
  return r;
}

std::vector<std::string> MockProvider::known_functions() {
  std::vector<std::string> out;
  for (const auto& t : templates()) out.emplace_back(t.name);
  return out;
}

std::optional<std::string> mutate(std::string_view source, MutationOp op, std::size_t occurrence) {
  std::string src(source);
  struct Site {
    std::size_t pos, len;
    std::string replacement;
  };
  std::vector<Site> sites;
  auto ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  switch (op) {
    case MutationOp::operator_swap: {
      static const std::pair<const char*, const char*> swaps[] = {
          {" // ", " % "}, {" % ", " // "}, {" <= ", " < "}, {" >= ", " > "}, {" < ", " <= "}, {" > ", " >= "},
          {" == ", " != "}, {" != ", " == "}, {" + ", " - "}, {" - ", " + "}, {" * ", " + "}};
      for (std::size_t i = 0; i < src.size(); ++i) {
        for (const auto& [from, to] : swaps) {
          std::string_view f(from);
          if (src.compare(i, f.size(), f) == 0) {
            sites.push_back({i, f.size(), to});
            i += f.size() - 2;
            break;
          }
        }
      }
      break;
    }
    case MutationOp::boundary_shift: {
      for (std::size_t i = 0; i < src.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(src[i])) || (i > 0 && (ident(src[i - 1]) || src[i - 1] == '.')))
          continue;
        std::size_t j = i;
        while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        if (j < src.size() && (ident(src[j]) || src[j] == '.')) {
          i = j;
          continue;
        }
        sites.push_back({i, j - i, std::to_string(std::stoll(src.substr(i, j - i)) + 1)});
        i = j;
      }
      break;
    }
    case MutationOp::branch_negation: {
      static const std::regex branch(R"(^([ \t]*)(if|elif) (.+):[ \t]*$)");
      std::size_t pos = 0;
      while (pos < src.size()) {
        auto nl = src.find('\n', pos);
        auto end = nl == std::string::npos ? src.size() : nl;
        std::string line = src.substr(pos, end - pos);
        std::smatch m;
        if (std::regex_match(line, m, branch))
          sites.push_back({pos, line.size(), m[1].str() + m[2].str() + " not (" + m[3].str() + "):"});
        pos = end + 1;
      }
      break;
    }
  }
  if (sites.empty()) return std::nullopt;
  const auto& s = sites[occurrence % sites.size()];
  src.replace(s.pos, s.len, s.replacement);
  return src;
}

std::vector<std::string> extract_code_blocks(std::string_view content) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    auto open = content.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = content.find('\n', open);
    if (body == std::string_view::npos) break;
    auto close = content.find("```", body + 1);
    if (close == std::string_view::npos) break;
    blocks.emplace_back(content.substr(body + 1, close - body - 1));
    pos = close + 3;
  }
  if (blocks.empty()) {
    auto s = normalize_source(content);
    if (!s.empty()) blocks.push_back(std::move(s));
  }
  return blocks;
}

}  // namespace nv
