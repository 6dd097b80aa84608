#include <filesystem>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "nv/errors.hpp"
#include "nv/pipeline.hpp"

using namespace nv;

namespace {

const char* kRecommend = R"(# recommend
generate versions n=8
generate tests n=4
execute
oracle strategy=cluster
rank
)";

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nv_pipe_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

PipelineContext gcd_context(MockProvider& mock, const std::filesystem::path& dir) {
  PipelineContext ctx;
  ctx.prompt = fixtures::kGcdPrompt;
  ctx.version_provider = &mock;
  ctx.seed = 42;
  ctx.base_dir = dir;
  ctx.arena.pool_size = 2;
  return ctx;
}

}  // namespace

TEST_CASE("parse the recommend script") {
  auto s = parse_pipeline(kRecommend);
  REQUIRE(s.steps.size() == 5);
  CHECK(s.steps[0].verb == Verb::generate);
  CHECK(s.steps[0].kind == "versions");
  CHECK(s.steps[0].args["n"] == 8);
  CHECK(s.steps[1].kind == "tests");
  CHECK(s.steps[2].verb == Verb::execute);
  CHECK(s.steps[3].args["strategy"] == "cluster");
  CHECK(s.steps[4].verb == Verb::rank);
  CHECK(s.steps[4].line == 6);
}

TEST_CASE("syntax errors carry line and column") {
  auto expect_error = [](const char* text, int line, int column, const char* fragment) {
    try {
      parse_pipeline(text);
      FAIL("expected DslSyntaxError for: " << text);
    } catch (const DslSyntaxError& e) {
      CHECK(e.line() == line);
      CHECK(e.column() == column);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_error("generate versions n=2\nexecute\noracle strategy=banana\n", 3, 17, "test_based");
  expect_error("fly away\n", 1, 1, "unknown verb");
  expect_error("generate n=3\n", 1, 10, "versions, tests");
  expect_error("generate versions n=0\n", 1, 21, "positive");
  expect_error("generate versions\n", 1, 1, "requires n=");
  expect_error("generate versions n=2 n=3\n", 1, 23, "duplicate");
  expect_error("generate versions n=2 color=red\n", 1, 23, "does not take");
  expect_error("generate versions n=[1,2\n", 1, 21, "unterminated");
  expect_error("generate versions n=2\nexecute pool_size=\n", 2, 19, "missing value");
  expect_error("generate versions n=2\nexecute\nemit path=x artifact=bananas\n", 3, 22, "ranking");
}

TEST_CASE("dataflow errors") {
  CHECK_THROWS_AS(parse_pipeline("rank\n"), DataflowError);
  CHECK_THROWS_AS(parse_pipeline("generate versions n=2\nrank\n"), DataflowError);
  CHECK_THROWS_AS(parse_pipeline("execute\n"), DataflowError);
  CHECK_THROWS_AS(parse_pipeline("generate tests n=2\nexecute\n"), DataflowError);
  CHECK_THROWS_AS(parse_pipeline("generate versions n=2\nexecute\nkillscore\n"), DataflowError);
  CHECK_NOTHROW(parse_pipeline("generate versions n=2\nexecute\nkillscore base=V1\n"));
  CHECK_THROWS_AS(parse_pipeline("emit path=a.json\n"), DataflowError);
  CHECK_THROWS_AS(parse_pipeline("generate versions n=2\nemit path=a.json artifact=srm\n"), DataflowError);
}

TEST_CASE("comments, strings and bare words") {
  auto s = parse_pipeline(
      "  # leading comment\n\ngenerate versions n=2 seed=7 # trailing\nexecute\n"
      "emit path=\"out dir/#1.jsonl\" artifact=srm\nemit path=out/ranking.json\n");
  REQUIRE(s.steps.size() == 4);
  CHECK(s.steps[0].args["seed"] == 7);
  CHECK(s.steps[2].args["path"] == "out dir/#1.jsonl");
  CHECK(s.steps[3].args["path"] == "out/ranking.json");
}

TEST_CASE("property: render then parse is the identity") {
  std::mt19937_64 rng(17);
  const std::vector<std::string> paths = {"a.json", "out/x y.jsonl", "r\"q\".json", "srm.csv"};
  for (int iter = 0; iter < 200; ++iter) {
    PipelineScript s;
    auto add = [&](Verb v, nlohmann::ordered_json args, std::string kind = "") {
      Step st;
      st.verb = v;
      st.kind = std::move(kind);
      st.args = std::move(args);
      s.steps.push_back(std::move(st));
    };
    nlohmann::ordered_json gen = {{"n", 1 + static_cast<int>(rng() % 9)}};
    if (rng() % 2) gen["seed"] = static_cast<std::int64_t>(rng() % 1000);
    if (rng() % 2) gen["temperature"] = 0.25 * static_cast<double>(rng() % 8);
    add(Verb::generate, gen, "versions");
    if (rng() % 2) add(Verb::generate, {{"n", 2}}, "tests");
    nlohmann::ordered_json exec = nlohmann::ordered_json::object();
    if (rng() % 2) exec["pool_size"] = 1 + static_cast<int>(rng() % 8);
    add(Verb::execute, exec);
    const char* strategies[] = {"test_based", "cluster_based", "prompt_assertions", "cluster"};
    add(Verb::oracle, {{"strategy", strategies[rng() % 4]}});
    if (rng() % 2) add(Verb::killscore, nlohmann::ordered_json::object());
    if (rng() % 2) add(Verb::minimize, {{"base", "V1"}});
    if (rng() % 2) add(Verb::diff, {{"base", "V2"}});
    add(Verb::rank, rng() % 2 ? nlohmann::ordered_json::object()
                              : nlohmann::ordered_json{{"w_prompt_pass", 0.7}, {"w_oracle_agree", 0.3},
                                                        {"w_speed", 0}, {"w_static", 0}});
    add(Verb::emit, {{"path", paths[rng() % paths.size()]}, {"artifact", rng() % 2 ? "ranking" : "srm"}});
    auto text = render_pipeline(s);
    CHECK(parse_pipeline(text) == s);
    CHECK(render_pipeline(parse_pipeline(text)) == text);
  }
}

TEST_CASE("recommend script end to end") {
  auto dir = scratch("recommend");
  MockProvider mock;
  auto ctx = gcd_context(mock, dir);
  auto a = run_pipeline(parse_pipeline(std::string(kRecommend) + "emit path=ranking.json\n"), ctx);
  REQUIRE(a.ranking);
  REQUIRE(a.srm);
  CHECK(a.srm->test_count() == 6);  // 2 prompt + 4 generated
  CHECK(a.srm->version_count() == 8);
  auto top = *a.srm->stimulus().find_version(a.ranking->front().version_id);
  CHECK(a.srm->cell(0, top).row_outputs == std::vector<Value>{Value(1)});
  CHECK(a.srm->cell(1, top).row_outputs == std::vector<Value>{Value(5)});
  CHECK(std::filesystem::exists(dir / "ranking.json"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("a generate-only script fills only the versions slot") {
  MockProvider mock;
  auto ctx = gcd_context(mock, ".");
  auto a = run_pipeline(parse_pipeline("generate versions n=3\n"), ctx);
  REQUIRE(a.versions);
  CHECK(a.versions->size() == 3);
  CHECK_FALSE(a.tests);
  CHECK_FALSE(a.sm);
  CHECK_FALSE(a.srm);
  CHECK_FALSE(a.ranking);
  CHECK(a.emitted.empty());
}

TEST_CASE("same script and seed give byte-identical artifacts") {
  // Wall-clock time is the only nondeterministic input: speed is weighted
  // out of the ranking, and the CSV wall_us column and the reported speed
  // component are masked.
  const std::string script = std::string(
                                 "generate versions n=8\ngenerate tests n=4\nexecute\noracle strategy=cluster\n"
                                 "rank w_prompt_pass=0.6 w_oracle_agree=0.25 w_speed=0 w_static=0.15\n") +
                             "killscore\nminimize\ndiff base=V1\n"
                             "emit path=srm.csv artifact=srm\nemit path=verdict.json artifact=verdict\n"
                             "emit path=ranking.json artifact=ranking\nemit path=min.json artifact=minimized\n"
                             "emit path=diff.txt artifact=diff\n";
  std::vector<std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    auto dir = scratch("det" + std::to_string(r));
    MockProvider mock;
    auto ctx = gcd_context(mock, dir);
    ctx.arena.pool_size = r == 0 ? 1 : 4;
    auto a = run_pipeline(parse_pipeline(script), ctx);
    for (const auto& p : a.emitted) {
      auto text = read_text_file(p);
      // Timing columns legitimately differ between runs.
      if (p.extension() == ".csv") {
        std::string stripped;
        std::istringstream in(text);
        for (std::string line; std::getline(in, line);) {
          std::vector<std::string> cols;
          std::istringstream ls(line);
          for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
          cols[4] = "_";
          for (const auto& c : cols) stripped += c + ",";
          stripped += "\n";
        }
        text = stripped;
      }
      if (p.filename() == "ranking.json") {
        auto j = nlohmann::ordered_json::parse(text);
        for (auto& e : j) e["components"]["speed"] = "_";
        text = j.dump();
      }
      runs[r].push_back(text);
    }
    std::filesystem::remove_all(dir);
  }
  REQUIRE(runs[0].size() == runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    const std::string both = runs[0][i] + "\n---\n" + runs[1][i];
    CHECK_MESSAGE(runs[0][i] == runs[1][i], both);
  }
}

TEST_CASE("a failing step reports its index and keeps earlier files") {
  auto dir = scratch("fail");
  MockProvider mock;
  auto ctx = gcd_context(mock, dir);
  auto script = parse_pipeline(
      "generate versions n=4\nexecute\nemit path=srm.jsonl artifact=srm\ndiff base=V42\nemit path=late.json\n");
  try {
    run_pipeline(script, ctx);
    FAIL("expected a step error");
  } catch (const StepError& e) {
    CHECK(e.step() == 4);
    CHECK(e.exit_code() == 2);
    CHECK(std::string(e.what()).find("step 4 (diff") != std::string::npos);
  }
  CHECK(std::filesystem::exists(dir / "srm.jsonl"));
  CHECK_FALSE(std::filesystem::exists(dir / "late.json"));
  CHECK(load_srm(dir / "srm.jsonl").version_count() == 4);
  std::filesystem::remove_all(dir);
}
