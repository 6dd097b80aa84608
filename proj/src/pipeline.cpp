#include "nv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "nv/errors.hpp"

namespace nv {

namespace {

enum class ArgType { integer, positive, number, boolean, string, strategy, slot };

struct VerbSpec {
  Verb verb;
  const char* name;
  std::map<std::string, ArgType> args;
  std::vector<std::string> required;
};

const std::vector<VerbSpec>& verb_specs() {
  static const std::vector<VerbSpec> specs = {
      {Verb::generate,
       "generate",
       {{"n", ArgType::positive},
        {"seed", ArgType::integer},
        {"temperature", ArgType::number},
        {"max_tokens", ArgType::positive}},
       {"n"}},
      {Verb::execute,
       "execute",
       {{"pool_size", ArgType::positive}, {"wall_ms", ArgType::positive}, {"mem_mb", ArgType::positive}},
       {}},
      {Verb::oracle, "oracle", {{"strategy", ArgType::strategy}, {"allow_degenerate", ArgType::boolean}}, {}},
      {Verb::killscore, "killscore", {{"base", ArgType::string}}, {}},
      {Verb::minimize, "minimize", {{"base", ArgType::string}}, {}},
      {Verb::diff, "diff", {{"base", ArgType::string}}, {"base"}},
      {Verb::rank,
       "rank",
       {{"w_prompt_pass", ArgType::number},
        {"w_oracle_agree", ArgType::number},
        {"w_speed", ArgType::number},
        {"w_static", ArgType::number}},
       {}},
      {Verb::emit, "emit", {{"path", ArgType::string}, {"artifact", ArgType::slot}}, {"path"}},
  };
  return specs;
}

const VerbSpec& spec_for(Verb v) {
  for (const auto& s : verb_specs())
    if (s.verb == v) return s;
  throw UsageError("unknown verb");
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_bare(char c) { return is_ident(c) || c == '.' || c == '-' || c == '/' || c == ':'; }

class LineParser {
 public:
  LineParser(std::string_view text, int line) : s_(text), line_(line) {}

  [[noreturn]] void fail(std::size_t pos, const std::string& msg) const {
    throw DslSyntaxError(line_, static_cast<int>(pos) + 1, msg);
  }

  void skip_space() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r')) ++i_;
  }
  bool at_end() {
    skip_space();
    return i_ >= s_.size() || s_[i_] == '#';
  }
  std::size_t pos() const { return i_; }

  std::string word() {
    auto start = i_;
    if (i_ >= s_.size() || !is_ident_start(s_[i_])) fail(i_, "expected a name");
    while (i_ < s_.size() && is_ident(s_[i_])) ++i_;
    return std::string(s_.substr(start, i_ - start));
  }

  void expect(char c) {
    if (i_ >= s_.size() || s_[i_] != c) fail(i_, std::string("expected '") + c + "'");
    ++i_;
  }

  // A JSON literal or a bare word.
  nlohmann::ordered_json value() {
    auto start = i_;
    if (i_ >= s_.size() || s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '#') fail(i_, "missing value");
    char c = s_[i_];
    if (c == '"') {
      scan_string();
    } else if (c == '[' || c == '{') {
      int depth = 0;
      while (i_ < s_.size()) {
        char d = s_[i_];
        if (d == '"') {
          scan_string();
          continue;
        }
        if (d == '[' || d == '{') ++depth;
        if (d == ']' || d == '}') --depth;
        ++i_;
        if (depth == 0) break;
      }
      if (depth != 0) fail(start, "unterminated literal");
    } else {
      while (i_ < s_.size() && s_[i_] != ' ' && s_[i_] != '\t' && s_[i_] != '#' && s_[i_] != '\r') ++i_;
    }
    auto token = s_.substr(start, i_ - start);
    auto j = nlohmann::ordered_json::parse(token, nullptr, false);
    if (!j.is_discarded()) return j;
    if (is_ident_start(token[0]) && std::all_of(token.begin(), token.end(), is_bare)) return std::string(token);
    fail(start, "invalid value '" + std::string(token) + "'");
  }

 private:
  void scan_string() {
    auto start = i_++;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') ++i_;
      ++i_;
    }
    if (i_ >= s_.size()) fail(start, "unterminated string");
    ++i_;
  }

  std::string_view s_;
  std::size_t i_ = 0;
  int line_;
};

std::string strategy_names() { return "test_based, cluster_based, prompt_assertions (or test, cluster, prompt)"; }

void check_arg(const LineParser& p, std::size_t pos, const std::string& key, ArgType type,
               const nlohmann::ordered_json& v) {
  auto fail = [&](const std::string& what) { p.fail(pos, "'" + key + "' " + what); };
  switch (type) {
    case ArgType::integer:
      if (!v.is_number_integer()) fail("must be an integer");
      break;
    case ArgType::positive:
      if (!v.is_number_integer() || v.get<std::int64_t>() < 1) fail("must be a positive integer");
      break;
    case ArgType::number:
      if (!v.is_number()) fail("must be a number");
      break;
    case ArgType::boolean:
      if (!v.is_boolean()) fail("must be true or false");
      break;
    case ArgType::string:
      if (!v.is_string() || v.get<std::string>().empty()) fail("must be a non-empty string");
      break;
    case ArgType::strategy: {
      OracleStrategy s;
      if (!v.is_string() || !parse_strategy(v.get<std::string>(), s))
        fail("must be one of " + strategy_names() + ", got " + v.dump());
      break;
    }
    case ArgType::slot: {
      const auto& names = slot_names();
      if (!v.is_string() || std::find(names.begin(), names.end(), v.get<std::string>()) == names.end()) {
        std::string list;
        for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
        fail("must be one of " + list + ", got " + v.dump());
      }
      break;
    }
  }
}

// Slots each step fills, used by the static dataflow check.
std::vector<std::string> produced_by(const Step& s) {
  switch (s.verb) {
    case Verb::generate: return {s.kind};
    case Verb::execute: return {"sm", "srm"};
    case Verb::oracle: return {"verdict"};
    case Verb::killscore: return {"km", "killscore"};
    case Verb::minimize: return {"km", "minimized"};
    case Verb::diff: return {"diff"};
    case Verb::rank: return {"ranking"};
    case Verb::emit: return {};
  }
  return {};
}

void check_dataflow(const PipelineScript& script) {
  std::set<std::string> have;
  std::vector<std::string> order;
  auto need = [&](const Step& s, const std::string& slot, const std::string& hint) {
    if (!have.count(slot))
      throw DataflowError("line " + std::to_string(s.line) + ": '" + std::string(to_string(s.verb)) + "' needs " +
                          hint);
  };
  for (const auto& s : script.steps) {
    switch (s.verb) {
      case Verb::generate: break;
      case Verb::execute: need(s, "versions", "a prior 'generate versions'"); break;
      case Verb::oracle:
      case Verb::diff:
      case Verb::rank: need(s, "srm", "a prior 'execute'"); break;
      case Verb::killscore:
      case Verb::minimize:
        need(s, "srm", "a prior 'execute'");
        if (!s.args.contains("base")) need(s, "verdict", "a prior 'oracle' step or a base= version");
        break;
      case Verb::emit:
        if (s.args.contains("artifact")) {
          auto a = s.args["artifact"].get<std::string>();
          need(s, a, "a prior step producing '" + a + "'");
        } else if (order.empty()) {
          throw DataflowError("line " + std::to_string(s.line) + ": 'emit' has nothing to write yet");
        }
        break;
    }
    for (auto& slot : produced_by(s)) {
      have.insert(slot);
      order.push_back(slot);
    }
  }
}

}  // namespace

std::string_view to_string(Verb v) { return spec_for(v).name; }

const std::vector<std::string>& slot_names() {
  static const std::vector<std::string> names = {"versions", "tests",     "sm",        "srm",  "verdict",
                                                 "km",       "killscore", "minimized", "diff", "ranking"};
  return names;
}

PipelineScript parse_pipeline(std::string_view text) {
  PipelineScript script;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    LineParser p(line, lineno);
    if (p.at_end()) continue;

    Step step;
    step.line = lineno;
    auto verb_pos = p.pos();
    auto verb = p.word();
    const VerbSpec* spec = nullptr;
    for (const auto& s : verb_specs())
      if (verb == s.name) spec = &s;
    if (!spec)
      p.fail(verb_pos, "unknown verb '" + verb + "' (expected generate, execute, oracle, killscore, minimize, diff, rank, emit)");
    step.verb = spec->verb;

    if (step.verb == Verb::generate) {
      if (p.at_end()) p.fail(p.pos(), "'generate' needs a kind: versions or tests");
      auto kind_pos = p.pos();
      step.kind = p.word();
      GenerationKind k;
      if (!parse_generation_kind(step.kind, k))
        p.fail(kind_pos, "generate kind must be one of versions, tests, got '" + step.kind + "'");
    }

    while (!p.at_end()) {
      auto key_pos = p.pos();
      auto key = p.word();
      p.expect('=');
      auto value_pos = p.pos();
      auto value = p.value();
      auto it = spec->args.find(key);
      if (it == spec->args.end()) {
        std::string allowed;
        for (const auto& [k, _] : spec->args) allowed += (allowed.empty() ? "" : ", ") + k;
        p.fail(key_pos, "'" + verb + "' does not take '" + key + "'" +
                            (allowed.empty() ? std::string(" (no arguments)") : " (allowed: " + allowed + ")"));
      }
      if (step.args.contains(key)) p.fail(key_pos, "duplicate argument '" + key + "'");
      check_arg(p, value_pos, key, it->second, value);
      step.args[key] = std::move(value);
    }
    for (const auto& r : spec->required)
      if (!step.args.contains(r)) p.fail(verb_pos, "'" + verb + "' requires " + r + "=");
    script.steps.push_back(std::move(step));
  }
  check_dataflow(script);
  return script;
}

std::string render_pipeline(const PipelineScript& script) {
  std::string out;
  for (const auto& s : script.steps) {
    out += to_string(s.verb);
    if (!s.kind.empty()) out += " " + s.kind;
    for (const auto& [k, v] : s.args.items()) out += " " + k + "=" + v.dump();
    out += '\n';
  }
  return out;
}

namespace {

class Runner {
 public:
  Runner(PipelineContext& ctx, Artifacts& out) : ctx_(ctx), a_(out) {}

  void run(const Step& s) {
    switch (s.verb) {
      case Verb::generate: generate_step(s); break;
      case Verb::execute: execute_step(s); break;
      case Verb::oracle: {
        OracleStrategy strategy = OracleStrategy::cluster_based;
        if (s.args.contains("strategy")) parse_strategy(s.args["strategy"].get<std::string>(), strategy);
        VoteOptions opts = ctx_.vote;
        if (s.args.contains("allow_degenerate")) opts.allow_degenerate = s.args["allow_degenerate"].get<bool>();
        a_.verdict = vote(*a_.srm, strategy, opts);
        for (const auto& w : a_.verdict->warnings) log("oracle: " + w);
        wrote("verdict");
        break;
      }
      case Verb::killscore:
        a_.km = reference_km(s);
        a_.killscore = kill_score(*a_.km);
        wrote("km");
        wrote("killscore");
        break;
      case Verb::minimize:
        a_.km = reference_km(s);
        a_.minimized = minimize_tests(*a_.km);
        wrote("km");
        wrote("minimized");
        break;
      case Verb::diff:
        a_.diff = diff_report(*a_.srm, s.args["base"].get<std::string>());
        wrote("diff");
        break;
      case Verb::rank: {
        RankingWeights w = ctx_.weights;
        if (s.args.contains("w_prompt_pass")) w.w_prompt_pass = s.args["w_prompt_pass"].get<double>();
        if (s.args.contains("w_oracle_agree")) w.w_oracle_agree = s.args["w_oracle_agree"].get<double>();
        if (s.args.contains("w_speed")) w.w_speed = s.args["w_speed"].get<double>();
        if (s.args.contains("w_static")) w.w_static = s.args["w_static"].get<double>();
        a_.ranking = rank_versions(*a_.srm, prompt().sheets, a_.verdict ? &*a_.verdict : nullptr, w);
        wrote("ranking");
        break;
      }
      case Verb::emit: emit_step(s); break;
    }
  }

 private:
  const PromptTests& prompt() {
    if (!prompt_) prompt_ = sheets_from_prompt(ctx_.prompt);
    return *prompt_;
  }

  void log(const std::string& msg) {
    if (ctx_.log) ctx_.log(msg);
  }

  void wrote(const std::string& slot) { last_slot_ = slot; }

  GenerationRequest request(const Step& s, GenerationKind kind) {
    GenerationRequest req;
    req.prompt_text = ctx_.prompt;
    req.kind = kind;
    req.n = s.args["n"].get<int>();
    req.seed = s.args.contains("seed") ? static_cast<std::uint64_t>(s.args["seed"].get<std::int64_t>()) : ctx_.seed;
    req.sampling = ctx_.sampling;
    if (s.args.contains("temperature")) req.sampling.temperature = s.args["temperature"].get<double>();
    if (s.args.contains("max_tokens")) req.sampling.max_tokens = s.args["max_tokens"].get<int>();
    return req;
  }

  void generate_step(const Step& s) {
    GenerationKind kind;
    parse_generation_kind(s.kind, kind);
    const auto& sig = prompt().signature;
    if (kind == GenerationKind::versions) {
      if (!ctx_.version_provider) throw ProviderUnavailableError("no provider configured");
      auto result = nv::generate(request(s, kind), *ctx_.version_provider);
      std::vector<ModuleVersion> versions;
      for (auto& src : result.items) {
        ModuleVersion v;
        v.source = std::move(src);
        v.entry = sig.name;
        v.origin = Origin::provider;
        versions.push_back(std::move(v));
      }
      a_.versions = std::move(versions);
      wrote("versions");
    } else {
      Provider* p = ctx_.test_provider ? ctx_.test_provider : ctx_.version_provider;
      if (!p) throw ProviderUnavailableError("no provider configured");
      auto result = nv::generate(request(s, kind), *p);
      auto parsed = parse_generated_tests(result.items, sig);
      for (const auto& r : parsed.rejected) {
        a_.diagnostics.push_back("generated test rejected: " + r);
        log("generated test rejected: " + r);
      }
      a_.tests = std::move(parsed.sheets);
      wrote("tests");
    }
  }

  void execute_step(const Step& s) {
    ArenaConfig cfg = ctx_.arena;
    if (s.args.contains("pool_size")) cfg.pool_size = s.args["pool_size"].get<int>();
    if (s.args.contains("wall_ms")) cfg.wall_ms = s.args["wall_ms"].get<std::int64_t>();
    if (s.args.contains("mem_mb")) cfg.mem_mb = s.args["mem_mb"].get<std::int64_t>();
    auto tests = prompt().sheets;
    if (a_.tests) tests.insert(tests.end(), a_.tests->begin(), a_.tests->end());
    a_.sm = build_sm(prompt().signature.name, prompt().signature, std::move(tests), *a_.versions);
    a_.srm = execute(*a_.sm, cfg);
    wrote("sm");
    wrote("srm");
  }

  KillMatrix reference_km(const Step& s) {
    if (s.args.contains("base")) return kill_matrix(*a_.srm, s.args["base"].get<std::string>());
    return kill_matrix(*a_.srm, *a_.verdict);
  }

  nlohmann::ordered_json slot_json(const std::string& slot) {
    using oj = nlohmann::ordered_json;
    if (slot == "versions") {
      auto arr = oj::array();
      for (const auto& v : *a_.versions) arr.push_back({{"source", v.source}, {"entry", v.entry}});
      return arr;
    }
    if (slot == "tests") {
      auto arr = oj::array();
      for (const auto& t : *a_.tests) arr.push_back(render_sheet(t));
      return arr;
    }
    if (slot == "sm") return sm_to_json(*a_.sm);
    if (slot == "verdict") return verdict_to_json(*a_.verdict);
    if (slot == "km") return kill_matrix_to_json(*a_.km);
    if (slot == "killscore") return kill_score_to_json(*a_.killscore);
    if (slot == "minimized") {
      auto arr = oj::array();
      for (auto t : *a_.minimized) arr.push_back(a_.km->test_ids[t]);
      return arr;
    }
    if (slot == "diff") return diff_to_json(*a_.diff);
    if (slot == "ranking") return ranking_to_json(*a_.ranking);
    throw UsageError("slot '" + slot + "' has no JSON form");
  }

  void emit_step(const Step& s) {
    std::string slot = s.args.contains("artifact") ? s.args["artifact"].get<std::string>() : last_slot_;
    std::filesystem::path path = s.args["path"].get<std::string>();
    if (path.is_relative()) path = ctx_.base_dir / path;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::string text;
    if (slot == "srm") {
      if (path.extension() == ".csv") {
        auto expectations = a_.verdict ? a_.verdict->expectations() : std::vector<TestExpectation>{};
        text = export_csv(*a_.srm, a_.verdict ? &expectations : nullptr);
      } else {
        text = srm_to_jsonl(*a_.srm);
      }
    } else if (slot == "diff" && path.extension() == ".txt") {
      text = diff_to_text(*a_.diff);
    } else {
      text = slot_json(slot).dump(2) + "\n";
    }
    write_text_file(path, text);
    a_.emitted.push_back(path);
    log("wrote " + slot + " to " + path.string());
  }

  PipelineContext& ctx_;
  Artifacts& a_;
  std::optional<PromptTests> prompt_;
  std::string last_slot_;
};

}  // namespace

Artifacts run_pipeline(const PipelineScript& script, PipelineContext& ctx) {
  check_dataflow(script);
  Artifacts artifacts;
  Runner runner(ctx, artifacts);
  for (std::size_t i = 0; i < script.steps.size(); ++i) {
    const auto& step = script.steps[i];
    try {
      runner.run(step);
    } catch (const Error& e) {
      throw StepError(i + 1, e.category(),
                      "step " + std::to_string(i + 1) + " (" + std::string(to_string(step.verb)) + ", line " +
                          std::to_string(step.line) + "): " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      throw StepError(i + 1, ErrorCategory::input,
                      "step " + std::to_string(i + 1) + " (" + std::string(to_string(step.verb)) + "): " + e.what());
    }
  }
  return artifacts;
}

}  // namespace nv
