#include <chrono>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "nv/arena.hpp"
#include "nv/errors.hpp"
#include "nv/pysub.hpp"

using namespace nv;

namespace {

ArenaConfig pool(int n) {
  ArenaConfig cfg;
  cfg.pool_size = n;
  cfg.wall_ms = 2000;
  return cfg;
}

ArenaConfig subprocess_pool(int n) {
  ArenaConfig cfg = pool(n);
  cfg.worker_command["python"] = NV_STUBWORKER_PATH;
  return cfg;
}

}  // namespace

TEST_CASE("srm shape and gcd outputs") {
  auto srm = execute(fixtures::gcd_kill_sm(), pool(2));
  REQUIRE(srm.test_count() == 4);
  REQUIRE(srm.version_count() == 6);
  CHECK(srm.cell(0, 0).row_outputs == std::vector<Value>{Value(1)});
  CHECK(srm.cell(1, 0).row_outputs == std::vector<Value>{Value(5)});
  CHECK(srm.cell(2, 3).row_outputs == std::vector<Value>{Value(18)});  // swapped mod
  CHECK(srm.cell(3, 5).row_outputs == std::vector<Value>{Value(-2)});  // no abs
  CHECK(srm.cell(2, 4).row_outputs == std::vector<Value>{Value(3)});   // off by one
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t v = 0; v < 6; ++v) CHECK(srm.cell(t, v).row_outputs.size() == 1);
}

TEST_CASE("pool size does not change behavior") {
  auto sm = fixtures::gcd_kill_sm();
  auto a = execute(sm, pool(1));
  auto b = execute(sm, pool(4));
  auto c = execute(sm, pool(8));
  CHECK(same_behavior(a, b));
  CHECK(same_behavior(a, c));
}

TEST_CASE("subprocess workers agree with in-process execution") {
  auto sm = fixtures::gcd_kill_sm();
  auto in_proc = execute(sm, pool(2));
  auto sub = execute(sm, subprocess_pool(3));
  CHECK(same_behavior(in_proc, sub));
  auto reuse_cfg = subprocess_pool(2);
  reuse_cfg.reuse_processes = true;
  CHECK(same_behavior(in_proc, execute(sm, reuse_cfg)));
}

TEST_CASE("a crashing candidate only affects its own column") {
  auto sm = fixtures::gcd_kill_sm();
  auto baseline = execute(sm, pool(4));
  auto crashing = sm;
  crashing.versions[2].source = "import os\ndef gcd(a, b):\n    os._exit(9)\n";
  crashing = build_sm(crashing.problem_id, crashing.signature, crashing.tests,
                      {crashing.versions.begin(), crashing.versions.end()});
  for (auto cfg : {pool(4), subprocess_pool(4)}) {
    auto srm = execute(crashing, cfg);
    for (std::size_t t = 0; t < srm.test_count(); ++t) {
      for (std::size_t v = 0; v < srm.version_count(); ++v) {
        if (v == 2) {
          CHECK(srm.cell(t, v).status == Status::crash);
          CHECK(srm.cell(t, v).row_outputs == std::vector<Value>{Value(Sentinel::crash)});
        } else {
          CHECK(output_vector(srm, t, v) == output_vector(baseline, t, v));
        }
      }
    }
  }
}

TEST_CASE("timeouts are bounded by twice the wall budget") {
  auto sm = fixtures::gcd_kill_sm();
  sm.tests.resize(1);
  sm.versions.resize(1);
  sm.versions[0].source = "def gcd(a, b):\n    while True:\n        pass\n";
  for (auto cfg : {pool(1), subprocess_pool(1)}) {
    cfg.wall_ms = 300;
    auto start = std::chrono::steady_clock::now();
    auto srm = execute(sm, cfg);
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    const auto& obs = srm.cell(0, 0);
    CHECK(obs.status == Status::timeout);
    CHECK(obs.row_outputs == std::vector<Value>{Value(Sentinel::timeout)});
    CHECK(obs.wall_us >= cfg.wall_ms * 1000);
    CHECK(obs.wall_us < 2 * cfg.wall_ms * 1000);
    CHECK(elapsed.count() < 2 * cfg.wall_ms + 500);  // spawn overhead included
  }
}

TEST_CASE("a worker that never answers is killed at the outer deadline") {
  auto sm = fixtures::gcd_kill_sm();
  sm.tests.resize(1);
  sm.versions.resize(1);
  ArenaConfig cfg = pool(1);
  cfg.wall_ms = 200;
  // Answers the ping, then ignores requests.
  cfg.worker_command["python"] = std::string("sh ") + NV_TEST_DATA_DIR + "/silent_worker.sh";
  auto srm = execute(sm, cfg);
  CHECK(srm.cell(0, 0).status == Status::timeout);
  CHECK(srm.cell(0, 0).wall_us < 2 * cfg.wall_ms * 1000);
}

TEST_CASE("missing or broken workers are reported before execution") {
  auto sm = fixtures::gcd_kill_sm();
  ArenaConfig cfg = pool(1);
  cfg.worker_command.erase("python");
  CHECK_THROWS_AS(execute(sm, cfg), WorkerUnavailableError);
  cfg.worker_command["python"] = "/nonexistent/worker";
  CHECK_THROWS_AS(execute(sm, cfg), WorkerUnavailableError);
  cfg.worker_command["python"] = "true";
  CHECK_THROWS_AS(execute(sm, cfg), WorkerUnavailableError);
  cfg = pool(0);
  CHECK_THROWS_AS(execute(sm, cfg), UsageError);
}

TEST_CASE("cancellation aborts") {
  auto sm = fixtures::gcd_kill_sm();
  ArenaConfig cfg = pool(1);
  cfg.cancel = std::make_shared<std::atomic<bool>>(false);
  cfg.progress = [&](std::size_t done, std::size_t) {
    if (done == 3) cfg.cancel->store(true);
  };
  CHECK_THROWS_AS(execute(sm, cfg), AbortedError);
}

TEST_CASE("resolve_refs") {
  std::vector<Value> produced = {Value(4), Value(Sentinel::error)};
  std::vector<Cell> in = {Cell(CellRef{1}), Cell(Value(2))};
  CHECK(resolve_refs(in, 2, produced) == std::vector<Value>{Value(4), Value(2)});
  std::vector<Cell> forward = {Cell(CellRef{2})};
  CHECK_THROWS_AS(resolve_refs(forward, 2, produced), RefError);
  CHECK_THROWS_AS(resolve_refs(forward, 3, produced), RefError);  // sentinel source
  std::vector<Cell> zero = {Cell(CellRef{0})};
  CHECK_THROWS_AS(resolve_refs(zero, 2, produced), RefError);
}

TEST_CASE("reference chains match a direct evaluation") {
  // Oracle: evaluate the same chain with the interpreter one call at a time.
  std::mt19937_64 rng(11);
  const char* src = "def gcd(a, b):\n    while b:\n        a, b = b, a % b\n    return abs(a)\n";
  auto module = pysub::compile(src);
  for (int iter = 0; iter < 20; ++iter) {
    SequenceSheet s;
    s.sheet_id = "c" + std::to_string(iter);
    s.signature = fixtures::gcd_signature();
    std::vector<Value> direct;
    pysub::Interpreter interp(module);
    interp.load({});
    for (int r = 1; r <= 3; ++r) {
      std::vector<Cell> inputs;
      std::vector<Value> args;
      for (int i = 0; i < 2; ++i) {
        if (r > 1 && rng() % 2) {
          int k = 1 + static_cast<int>(rng() % (r - 1));
          inputs.emplace_back(CellRef{k});
          args.push_back(direct[k - 1]);
        } else {
          std::int64_t x = static_cast<std::int64_t>(rng() % 200) - 50;
          inputs.emplace_back(Value(x));
          args.push_back(Value(x));
        }
      }
      s.rows.push_back({r, "gcd", inputs});
      direct.push_back(interp.call("gcd", args, {}).value);
    }
    ModuleVersion v;
    v.source = src;
    v.entry = "gcd";
    auto srm = execute(build_sm("chain", s.signature, {s}, {v}), pool(1));
    CHECK(srm.cell(0, 0).row_outputs == direct);
  }
}

TEST_CASE("error row terminates the sheet with sentinels after it") {
  SequenceSheet s = fixtures::gcd_sheet("e", 1, 0);
  s.rows.push_back({2, "gcd", {Cell(CellRef{1}), Cell(Value(3))}});
  s.rows.push_back({3, "gcd", {Cell(Value(1)), Cell(Value(1))}});
  ModuleVersion v;
  v.source = "def gcd(a, b):\n    if a == 1:\n        return a // b\n    return a\n";
  v.entry = "gcd";
  auto srm = execute(build_sm("err", s.signature, {s}, {v}), pool(1));
  const auto& obs = srm.cell(0, 0);
  CHECK(obs.status == Status::error);
  CHECK(obs.row_outputs ==
        std::vector<Value>{Value(Sentinel::error), Value(Sentinel::error), Value(Sentinel::error)});
}

TEST_CASE("compile failures and missing entries are per-cell errors") {
  auto sm = fixtures::gcd_kill_sm();
  sm.versions[0].source = "def gcd(a, b)\n    return a\n";
  sm.versions[1].entry = "nope";
  auto srm = execute(sm, pool(2));
  CHECK(srm.cell(0, 0).status == Status::error);
  CHECK(srm.cell(0, 1).status == Status::error);
  CHECK(srm.cell(0, 2).status == Status::ok);
}

TEST_CASE("deep recursion on pool threads") {
  auto sm = fixtures::gcd_kill_sm();
  sm.tests = {fixtures::gcd_sheet("d1", 900, 0), fixtures::gcd_sheet("d2", 5000, 0)};
  sm.versions.resize(2);
  sm.versions[0].source = "def gcd(a, b):\n    if a == 0:\n        return b\n    return gcd(a - 1, b + 1)\n";
  auto srm = execute(sm, pool(2));
  CHECK(srm.cell(0, 0).row_outputs == std::vector<Value>{Value(900)});
  CHECK(srm.cell(1, 0).status == Status::error);  // RecursionError
  CHECK(srm.cell(1, 1).status == Status::ok);
}
