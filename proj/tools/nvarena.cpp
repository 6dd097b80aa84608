// nvarena: command-line front end for the differential testing engine.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "nv/analysis.hpp"
#include "nv/arena.hpp"
#include "nv/config.hpp"
#include "nv/errors.hpp"
#include "nv/oracle.hpp"
#include "nv/pipeline.hpp"
#include "nv/process.hpp"
#include "nv/providers.hpp"
#include "nv/workerproto.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool json = false;
  std::vector<std::string> sets;
  std::optional<int> pool_size;
  std::optional<std::int64_t> wall_ms;
  std::optional<std::int64_t> mem_mb;
  std::string provider;
  std::string transcript;
  std::string record;
};

Common common;

// With --json, stdout carries exactly one document and text goes to stderr.
std::ostream& text_out() { return common.json ? std::cerr : std::cout; }

void emit_json(const json& doc) { std::cout << doc.dump(2) << '\n'; }

void add_common(CLI::App* cmd) {
  cmd->add_option("--seed", common.seed, "Seed for all randomness");
  cmd->add_option("--config", common.config, "Config file (default ./nvarena.conf when present)");
  cmd->add_flag("--json", common.json, "Write one JSON document to stdout");
  cmd->add_option("--set", common.sets, "Override a setting, section.key=value")->take_all();
  cmd->add_option("--pool-size", common.pool_size, "Concurrent cell executions");
  cmd->add_option("--wall-ms", common.wall_ms, "Wall-clock limit per invocation");
  cmd->add_option("--mem-mb", common.mem_mb, "Memory limit per candidate");
  cmd->add_option("--provider", common.provider, "mock or http");
  cmd->add_option("--transcript", common.transcript, "Replay HTTP provider answers from a transcript");
  cmd->add_option("--record", common.record, "Append HTTP provider exchanges to a transcript");
}

nv::CliConfig load_config() {
  nv::Settings file;
  if (!common.config.empty()) {
    file = nv::parse_config(nv::read_text_file(common.config));
  } else if (fs::exists("nvarena.conf")) {
    file = nv::parse_config(nv::read_text_file("nvarena.conf"));
  }
  nv::Settings flags;
  for (const auto& s : common.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw nv::UsageError("--set expects section.key=value, got '" + s + "'");
    flags[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (common.seed) flags["seed"] = std::to_string(*common.seed);
  if (common.pool_size) flags["arena.pool_size"] = std::to_string(*common.pool_size);
  if (common.wall_ms) flags["arena.wall_ms"] = std::to_string(*common.wall_ms);
  if (common.mem_mb) flags["arena.mem_mb"] = std::to_string(*common.mem_mb);
  if (!common.transcript.empty()) {
    flags["provider.transcript"] = common.transcript;
    flags["provider.kind"] = "http";
  }
  if (!common.record.empty()) flags["provider.record"] = common.record;
  if (!common.provider.empty()) flags["provider.kind"] = common.provider;
  return nv::resolve_config(nv::merge_settings(file, nv::settings_from_env(), flags));
}

std::unique_ptr<nv::Provider> make_provider(const nv::CliConfig& cfg) {
  if (cfg.provider == "mock") return std::make_unique<nv::MockProvider>();
  return std::make_unique<nv::HttpProvider>(cfg.http);
}

nv::OracleStrategy strategy_from(const std::string& text) {
  nv::OracleStrategy s;
  if (!nv::parse_strategy(text, s))
    throw nv::UsageError("--strategy must be test, cluster or prompt (got '" + text + "')");
  return s;
}

nv::PipelineContext context_for(const nv::CliConfig& cfg, nv::Provider& provider, std::string prompt) {
  nv::PipelineContext ctx;
  ctx.prompt = std::move(prompt);
  ctx.version_provider = &provider;
  ctx.arena = cfg.arena;
  ctx.weights = cfg.weights;
  ctx.seed = cfg.seed;
  ctx.sampling = cfg.sampling;
  ctx.log = [](const std::string& m) { text_out() << m << '\n'; };
  return ctx;
}

nv::Step step(nv::Verb verb, json args = json::object(), std::string kind = "") {
  nv::Step s;
  s.verb = verb;
  s.kind = std::move(kind);
  s.args = std::move(args);
  return s;
}

void print_ranking(const std::vector<nv::RankEntry>& ranking) {
  auto& out = text_out();
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-5s %-8s %-8s %-8s %-8s %-8s %-8s\n", "rank", "version", "score", "prompt",
                "oracle", "speed", "static");
  out << buf;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& e = ranking[i];
    std::snprintf(buf, sizeof buf, "%-5zu %-8s %-8.4f %-8.2f %-8.2f %-8.2f %-8.2f\n", i + 1, e.version_id.c_str(),
                  e.score, e.prompt_pass, e.oracle_agree, e.speed, e.static_size);
    out << buf;
  }
}

// ---- recommend

struct RecommendArgs {
  std::string prompt;
  int n = 6;
  int tests = 2;
  std::string strategy = "cluster";
  bool allow_degenerate = false;
  std::string out;
};

int cmd_recommend(const RecommendArgs& a) {
  if (a.n < 1) throw nv::UsageError("-n must be at least 1 (got " + std::to_string(a.n) + ")");
  if (a.tests < 0) throw nv::UsageError("--tests must not be negative");
  auto strategy = strategy_from(a.strategy);
  auto cfg = load_config();
  auto prompt = nv::read_text_file(a.prompt);
  nv::sheets_from_prompt(prompt);  // parse errors before any generation
  auto provider = make_provider(cfg);
  auto ctx = context_for(cfg, *provider, prompt);
  ctx.vote.allow_degenerate = a.allow_degenerate;

  nv::PipelineScript script;
  script.steps.push_back(step(nv::Verb::generate, {{"n", a.n}}, "versions"));
  if (a.tests > 0) script.steps.push_back(step(nv::Verb::generate, {{"n", a.tests}}, "tests"));
  script.steps.push_back(step(nv::Verb::execute));
  script.steps.push_back(step(nv::Verb::oracle, {{"strategy", std::string(nv::to_string(strategy))}}));
  script.steps.push_back(step(nv::Verb::rank));
  auto art = nv::run_pipeline(script, ctx);

  std::optional<fs::path> srm_path;
  fs::path out_dir = a.out.empty() ? cfg.out_dir : fs::path(a.out);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    srm_path = out_dir / "srm.jsonl";
    nv::save_srm(*art.srm, *srm_path);
    nv::write_text_file(out_dir / "ranking.json", nv::ranking_to_json(*art.ranking).dump(2) + "\n");
  }
  const auto& top = art.ranking->front();
  const auto& top_version = art.srm->stimulus().versions[*art.srm->stimulus().find_version(top.version_id)];
  if (common.json) {
    json doc;
    doc["command"] = "recommend";
    doc["top"] = {{"version_id", top.version_id}, {"score", top.score}, {"source", top_version.source}};
    doc["ranking"] = nv::ranking_to_json(*art.ranking);
    doc["verdict"] = nv::verdict_to_json(*art.verdict);
    doc["versions"] = art.srm->version_count();
    doc["tests"] = art.srm->test_count();
    doc["diagnostics"] = art.diagnostics;
    doc["srm"] = srm_path ? json(srm_path->string()) : json(nullptr);
    emit_json(doc);
  } else {
    print_ranking(*art.ranking);
    std::cout << "\nrecommended " << top.version_id << ":\n" << top_version.source;
    if (srm_path) std::cout << "\nsrm written to " << srm_path->string() << '\n';
  }
  return 0;
}

// ---- analysis commands over a saved SRM

struct ReferenceArgs {
  std::string srm;
  std::string strategy = "cluster";
  std::string base;
  bool allow_degenerate = false;
};

nv::KillMatrix reference_matrix(const nv::StimulusResponseMatrix& srm, const ReferenceArgs& a) {
  if (!a.base.empty()) return nv::kill_matrix(srm, a.base);
  auto verdict = nv::vote(srm, strategy_from(a.strategy), {a.allow_degenerate});
  return nv::kill_matrix(srm, verdict);
}

int cmd_testquality(const ReferenceArgs& a) {
  load_config();
  auto srm = nv::load_srm(a.srm);
  auto km = reference_matrix(srm, a);
  auto score = nv::kill_score(km);
  if (common.json) {
    json doc;
    doc["command"] = "testquality";
    doc["kill_score"] = nv::kill_score_to_json(score);
    doc["kill_matrix"] = nv::kill_matrix_to_json(km);
    emit_json(doc);
  } else {
    std::cout << "reference: " << (km.base_id.empty() ? "oracle" : km.base_id) << '\n';
    std::cout << "killed " << score.killed << " of " << score.candidates << " versions, raw kill score " << score.raw
              << '\n';
    std::cout << "adjusted kill score ";
    if (score.adjusted) std::cout << *score.adjusted;
    else std::cout << "undefined (every version is equivalent)";
    std::cout << '\n';
    std::cout << "equivalent versions:";
    for (const auto& id : km.equivalent_versions) std::cout << ' ' << id;
    std::cout << '\n';
  }
  return 0;
}

int cmd_minimize(const ReferenceArgs& a) {
  load_config();
  auto srm = nv::load_srm(a.srm);
  auto km = reference_matrix(srm, a);
  auto picked = nv::minimize_tests(km);
  std::vector<std::string> ids;
  for (auto t : picked) ids.push_back(km.test_ids[t]);
  if (common.json) {
    json doc;
    doc["command"] = "minimize";
    doc["tests"] = ids;
    doc["original_tests"] = km.test_ids.size();
    doc["kill_score"] = nv::kill_score_to_json(nv::kill_score(km, picked));
    emit_json(doc);
  } else {
    std::cout << ids.size() << " of " << km.test_ids.size() << " tests kill the same versions:";
    for (const auto& id : ids) std::cout << ' ' << id;
    std::cout << '\n';
  }
  return 0;
}

int cmd_oracle(const ReferenceArgs& a) {
  load_config();
  auto srm = nv::load_srm(a.srm);
  auto verdict = nv::vote(srm, strategy_from(a.strategy), {a.allow_degenerate});
  if (common.json) {
    emit_json(nv::verdict_to_json(verdict));
  } else {
    std::cout << "strategy: " << nv::to_string(verdict.strategy) << '\n';
    for (std::size_t t = 0; t < verdict.per_test.size(); ++t) {
      const auto& e = verdict.per_test[t].expectation;
      std::cout << srm.stimulus().tests[t].sheet_id << ": ";
      if (!e.decided()) {
        std::cout << "UNDECIDED\n";
        continue;
      }
      for (std::size_t i = 0; i < e.expected->size(); ++i) std::cout << (i ? " | " : "") << (*e.expected)[i];
      std::cout << "  (support " << verdict.per_test[t].support << ")\n";
    }
    if (verdict.clusters) {
      std::cout << "clusters:\n";
      for (const auto& c : *verdict.clusters) {
        std::cout << "  " << c.signature_hash << ":";
        for (const auto& m : c.members) std::cout << ' ' << m;
        std::cout << '\n';
      }
    }
    std::cout << "correct versions:";
    for (const auto& id : verdict.correct_versions) std::cout << ' ' << id;
    if (verdict.correct_versions.empty()) std::cout << " none";
    std::cout << '\n';
  }
  for (const auto& w : verdict.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

// ---- difftest

struct DiffArgs {
  std::string input;
  std::string base;
  std::string base_file;
  int n = 6;
  int tests = 2;
};

bool looks_like_srm(const std::string& path) {
  std::ifstream in(path);
  std::string first;
  std::getline(in, first);
  auto j = nlohmann::json::parse(first, nullptr, false);
  return j.is_object() && j.contains("format");
}

int cmd_difftest(const DiffArgs& a) {
  if (a.base.empty() == a.base_file.empty()) throw nv::UsageError("give exactly one of --base or --base-file");
  auto cfg = load_config();
  std::string base_id = a.base;
  nv::StimulusResponseMatrix srm;
  std::optional<nv::ModuleVersion> base_version;
  if (!a.base_file.empty()) {
    base_version.emplace();
    base_version->version_id = "BASE";
    base_version->source = nv::read_text_file(a.base_file);
    base_version->origin = nv::Origin::manual;
    base_id = "BASE";
  }
  if (!nv::read_text_file(a.input).empty() && looks_like_srm(a.input)) {
    srm = nv::load_srm(a.input);
    if (base_version) {
      auto sm = srm.stimulus();
      base_version->entry = sm.signature.name;
      sm.versions.insert(sm.versions.begin(), *base_version);
      srm = nv::execute(sm, cfg.arena);
    }
  } else {
    if (a.n < 1) throw nv::UsageError("-n must be at least 1");
    auto prompt = nv::read_text_file(a.input);
    auto provider = make_provider(cfg);
    auto ctx = context_for(cfg, *provider, prompt);
    nv::PipelineScript script;
    script.steps.push_back(step(nv::Verb::generate, {{"n", a.n}}, "versions"));
    if (a.tests > 0) script.steps.push_back(step(nv::Verb::generate, {{"n", a.tests}}, "tests"));
    auto art = nv::run_pipeline(script, ctx);
    auto pt = nv::sheets_from_prompt(prompt);
    auto tests = pt.sheets;
    if (art.tests) tests.insert(tests.end(), art.tests->begin(), art.tests->end());
    auto versions = *art.versions;
    if (base_version) {
      base_version->entry = pt.signature.name;
      versions.insert(versions.begin(), *base_version);
    }
    srm = nv::execute(nv::build_sm(pt.signature.name, pt.signature, tests, versions), cfg.arena);
  }
  auto report = nv::diff_report(srm, base_id);
  if (common.json) {
    auto doc = nv::diff_to_json(report);
    doc["command"] = "difftest";
    emit_json(doc);
  } else {
    std::cout << nv::diff_to_text(report);
  }
  return 0;
}

// ---- run, export, conformance

struct RunArgs {
  std::string script;
  std::string prompt;
  std::string out;
};

int cmd_run(const RunArgs& a) {
  auto cfg = load_config();
  auto script = nv::parse_pipeline(nv::read_text_file(a.script));
  auto provider = make_provider(cfg);
  auto ctx = context_for(cfg, *provider, a.prompt.empty() ? std::string() : nv::read_text_file(a.prompt));
  if (a.prompt.empty()) throw nv::UsageError("run needs --prompt");
  ctx.base_dir = !a.out.empty() ? fs::path(a.out) : !cfg.out_dir.empty() ? cfg.out_dir : fs::current_path();
  auto art = nv::run_pipeline(script, ctx);
  if (common.json) {
    json doc;
    doc["command"] = "run";
    doc["steps"] = script.steps.size();
    auto emitted = json::array();
    for (const auto& p : art.emitted) emitted.push_back(p.string());
    doc["emitted"] = emitted;
    doc["ranking"] = art.ranking ? nv::ranking_to_json(*art.ranking) : json(nullptr);
    doc["diagnostics"] = art.diagnostics;
    emit_json(doc);
  } else {
    std::cout << "ran " << script.steps.size() << " steps\n";
    if (art.ranking) print_ranking(*art.ranking);
  }
  return 0;
}

struct ExportArgs {
  std::vector<std::string> srms;
  std::string out;
  std::string strategy;
};

int cmd_export(const ExportArgs& a) {
  load_config();
  std::vector<nv::StimulusResponseMatrix> srms;
  for (const auto& p : a.srms) srms.push_back(nv::load_srm(p));
  std::vector<std::vector<nv::TestExpectation>> expectations(srms.size());
  std::vector<nv::CsvSource> sources;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < srms.size(); ++i) {
    nv::CsvSource src{&srms[i], nullptr};
    if (!a.strategy.empty()) {
      expectations[i] = nv::vote(srms[i], strategy_from(a.strategy)).expectations();
      src.expectations = &expectations[i];
    }
    rows += srms[i].test_count() * srms[i].version_count();
    sources.push_back(src);
  }
  auto csv = nv::export_csv(sources);
  if (!a.out.empty()) nv::write_text_file(a.out, csv);
  if (common.json) {
    json doc;
    doc["command"] = "export";
    doc["rows"] = rows;
    doc["path"] = a.out.empty() ? json(nullptr) : json(a.out);
    if (a.out.empty()) doc["csv"] = csv;
    emit_json(doc);
  } else if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::cout << "wrote " << rows << " rows to " << a.out << '\n';
  }
  return 0;
}

int cmd_conformance(const std::string& command_arg) {
  load_config();
  std::string command = command_arg.empty() ? (fs::path(nv::self_exe_dir()) / "nvarena-stubworker").string() : command_arg;
  auto report = nv::conformance_check(command);
  if (common.json) {
    emit_json(json::parse(report.to_json().dump()));
  } else {
    for (const auto& c : report.cases)
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : ": " + c.detail) << '\n';
  }
  text_out() << report.passed() << "/" << report.cases.size() << " conformance cases passed\n";
  return report.passed() == report.cases.size() ? 0 : static_cast<int>(nv::ErrorCategory::arena);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nvarena: run N generated versions against generated tests and compare them"};
  app.require_subcommand(1);

  RecommendArgs rec;
  auto* recommend = app.add_subcommand("recommend", "Generate versions and tests, execute, rank");
  recommend->add_option("prompt", rec.prompt, "Prompt file with a def line and doctest examples")->required();
  recommend->add_option("-n,--n", rec.n, "Number of versions to request");
  recommend->add_option("--tests", rec.tests, "Number of extra tests to request");
  recommend->add_option("--strategy", rec.strategy, "Oracle strategy for the agreement score");
  recommend->add_flag("--allow-degenerate-oracle", rec.allow_degenerate);
  recommend->add_option("--out", rec.out, "Directory for srm.jsonl and ranking.json");
  add_common(recommend);

  DiffArgs dif;
  auto* difftest = app.add_subcommand("difftest", "Compare versions against a base version");
  difftest->add_option("input", dif.input, "Saved SRM (.jsonl) or prompt file")->required();
  difftest->add_option("--base", dif.base, "Version id in the matrix");
  difftest->add_option("--base-file", dif.base_file, "Module source to use as the base");
  difftest->add_option("-n,--n", dif.n, "Versions to generate when input is a prompt");
  difftest->add_option("--tests", dif.tests, "Tests to generate when input is a prompt");
  add_common(difftest);

  ReferenceArgs tq, mn, orc;
  auto add_reference = [](CLI::App* cmd, ReferenceArgs& r) {
    cmd->add_option("srm", r.srm, "Saved SRM file")->required();
    cmd->add_option("--strategy", r.strategy, "Oracle strategy: test, cluster, prompt");
    cmd->add_option("--base", r.base, "Use a version as the reference instead of an oracle");
    cmd->add_flag("--allow-degenerate-oracle", r.allow_degenerate);
    add_common(cmd);
  };
  auto* testquality = app.add_subcommand("testquality", "Kill matrix and version kill score");
  add_reference(testquality, tq);
  auto* minimize = app.add_subcommand("minimize", "Smallest greedy test subset with the same kills");
  add_reference(minimize, mn);
  auto* oracle = app.add_subcommand("oracle", "Infer expected outputs by voting");
  add_reference(oracle, orc);

  RunArgs run;
  auto* runcmd = app.add_subcommand("run", "Execute a pipeline script (.dgai)");
  runcmd->add_option("script", run.script, "Pipeline script")->required();
  runcmd->add_option("--prompt", run.prompt, "Prompt file");
  runcmd->add_option("--out", run.out, "Directory for relative emit paths");
  add_common(runcmd);

  ExportArgs exp;
  auto* exportcmd = app.add_subcommand("export", "Write SRMs as one CSV table");
  exportcmd->add_option("srm", exp.srms, "Saved SRM files")->required();
  exportcmd->add_option("--out", exp.out, "CSV path (stdout when omitted)");
  exportcmd->add_option("--strategy", exp.strategy, "Fill oracle_match using this oracle");
  add_common(exportcmd);

  std::string worker;
  auto* conformance = app.add_subcommand("conformance", "Check a worker against the wire protocol");
  conformance->add_option("worker", worker, "Worker command (default: bundled stub worker)");
  add_common(conformance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(nv::ErrorCategory::usage);
  }

  try {
    if (*recommend) return cmd_recommend(rec);
    if (*difftest) return cmd_difftest(dif);
    if (*testquality) return cmd_testquality(tq);
    if (*minimize) return cmd_minimize(mn);
    if (*oracle) return cmd_oracle(orc);
    if (*runcmd) return cmd_run(run);
    if (*exportcmd) return cmd_export(exp);
    if (*conformance) return cmd_conformance(worker);
  } catch (const nv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (common.json)
      emit_json({{"error", {{"category", nv::to_string(e.category())}, {"message", e.what()}, {"exit_code", e.exit_code()}}}});
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (common.json) emit_json({{"error", {{"category", "input"}, {"message", e.what()}, {"exit_code", 2}}}});
    return static_cast<int>(nv::ErrorCategory::input);
  }
  return static_cast<int>(nv::ErrorCategory::usage);
}
