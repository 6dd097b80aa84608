// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "brute.hpp"
#include "fixtures.hpp"
#include "nv/analysis.hpp"
#include "nv/arena.hpp"
#include "nv/matrix.hpp"
#include "nv/oracle.hpp"
#include "nv/process.hpp"

using namespace nv;
using namespace brute;

namespace {

// Collects the first few failure details for a criterion.
struct Check {
  std::vector<std::string> problems;
  void expect(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
};

int failures = 0;

void report(const std::string& name, const std::function<void(Check&)>& body) {
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.problems.push_back(std::string("exception: ") + e.what());
  }
  if (c.problems.empty()) {
    std::cout << "PASS " << name << std::endl;
    return;
  }
  ++failures;
  std::cout << "FAIL " << name << ": " << c.problems.front();
  if (c.problems.size() > 1) std::cout << " (+" << c.problems.size() - 1 << " more)";
  std::cout << std::endl;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nv_accept_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

ArenaConfig pool(int n) {
  ArenaConfig cfg;
  cfg.pool_size = n;
  return cfg;
}

std::size_t csv_rows(const std::string& csv) {
  return static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
}

void e2e_recommend(Check& c) {
  auto dir = scratch("e2e");
  std::ofstream(dir / "gcd.txt") << fixtures::kGcdPrompt;
  const auto start = std::chrono::steady_clock::now();
  auto proc = ChildProcess::spawn({NV_CLI_PATH, "recommend", (dir / "gcd.txt").string(), "-n", "6", "--tests", "2",
                                   "--seed", "42", "--json", "--out", (dir / "out").string()},
                                  {});
  std::string out, line;
  while (proc->read_line(line, start + std::chrono::seconds(60)) == ChildProcess::Read::line) out += line + "\n";
  int status = proc->wait();
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "recommend did not exit 0");
  c.expect(secs < 30.0, "took " + std::to_string(secs) + " s");
  auto doc = nlohmann::json::parse(out, nullptr, false);
  if (doc.is_discarded() || !doc.contains("top")) {
    c.expect(false, "no JSON result on stdout");
    return;
  }
  auto srm = load_srm(dir / "out" / "srm.jsonl");
  c.expect(srm.version_count() == 6, "expected 6 versions");
  c.expect(srm.test_count() == 4, "expected 2 prompt + 2 generated tests");
  // Mock composition: exactly 2 versions match std::gcd on an input grid. A
  // buggy version can still agree on the 4 executed tests.
  std::vector<SequenceSheet> grid;
  for (std::int64_t a = -12; a <= 24; a += 3)
    for (std::int64_t b = -10; b <= 20; b += 5)
      grid.push_back(fixtures::gcd_sheet("x" + std::to_string(grid.size()), a, b));
  auto gsrm = execute(build_sm("gcd", fixtures::gcd_signature(), grid, srm.stimulus().versions), pool(4));
  std::size_t correct = 0;
  for (std::size_t v = 0; v < gsrm.version_count(); ++v) {
    bool ok = true;
    for (std::size_t t = 0; t < gsrm.test_count(); ++t) {
      const auto& row = gsrm.stimulus().tests[t].rows[0];
      auto want = std::gcd(std::get<Value>(row.inputs[0]).as_int(), std::get<Value>(row.inputs[1]).as_int());
      ok = ok && gsrm.cell(t, v).row_outputs == std::vector<Value>{Value(static_cast<std::int64_t>(want))};
    }
    correct += ok;
  }
  c.expect(correct == 2, "mock gave " + std::to_string(correct) + " correct versions, expected 2");
  auto top = srm.stimulus().find_version(doc["top"]["version_id"].get<std::string>());
  if (!top) {
    c.expect(false, "top version missing from the matrix");
    return;
  }
  c.expect(srm.cell(0, *top).row_outputs == std::vector<Value>{Value(1)}, "top gives gcd(3,7) != 1");
  c.expect(srm.cell(1, *top).row_outputs == std::vector<Value>{Value(5)}, "top gives gcd(10,15) != 5");
}

void oracle_structure(Check& c) {
  auto srm = fixtures::voting_fixture();
  auto tb = vote_test_based(srm);
  auto cb = vote_cluster_based(srm);
  std::set<std::string> tb_set(tb.correct_versions.begin(), tb.correct_versions.end());
  std::set<std::string> cb_set(cb.correct_versions.begin(), cb.correct_versions.end());
  c.expect(tb_set.empty(), "test-based voting certified a version");
  c.expect(tb_set == brute_test_based(srm), "test-based differs from brute force");
  c.expect(cb_set == std::set<std::string>{"V4", "V5"}, "cluster-based did not certify {V4, V5}");
  c.expect(cb_set == brute_cluster_based(srm), "cluster-based differs from brute force");
}

void kill_matrix_equivalence(Check& c) {
  std::vector<StimulusResponseMatrix> fixtures_list{execute(fixtures::gcd_kill_sm(), pool(4)),
                                                    fixtures::voting_fixture()};
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 200; ++i) {
    std::size_t versions = 1 + rng() % 8, tests = 1 + rng() % 8;
    std::vector<std::vector<Value>> cols(versions);
    for (auto& col : cols)
      for (std::size_t t = 0; t < tests; ++t) {
        auto r = rng() % 7;
        col.push_back(r == 6 ? Value(Sentinel::error) : Value(static_cast<std::int64_t>(r % 3)));
      }
    fixtures_list.push_back(fixtures::srm_from_outputs(cols));
  }
  std::size_t checked = 0;
  for (std::size_t f = 0; f < fixtures_list.size(); ++f) {
    const auto& srm = fixtures_list[f];
    for (std::size_t base = 0; base < srm.version_count(); ++base) {
      auto km = kill_matrix(srm, srm.stimulus().versions[base].version_id);
      c.expect(km.kills == brute_kills(srm, base), "fixture " + std::to_string(f) + " base " + std::to_string(base));
      ++checked;
    }
  }
  c.expect(checked > 200, "too few matrices checked");
}

void minimization_soundness(Check& c) {
  std::mt19937_64 rng(100);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    auto km = random_km(rng, 10, 10);
    std::vector<std::size_t> all(km.test_ids.size());
    std::iota(all.begin(), all.end(), 0);
    auto full = km.killed_by(all);
    auto min = minimize_tests(km);
    if (km.killed_by(min) == full) ++same;
    auto opt = optimal_cover(km);
    c.expect(static_cast<double>(min.size()) <= harmonic(count(full)) * static_cast<double>(opt) + 1e-9,
             "greedy size " + std::to_string(min.size()) + " above H(k) x " + std::to_string(opt));
  }
  c.expect(same == 100, std::to_string(same) + "/100 kept the killed set");
}

void arena_determinism(Check& c) {
  auto sm = fixtures::gcd_kill_sm();
  auto a = execute(sm, pool(1));
  auto b = execute(sm, pool(4));
  auto d = execute(sm, pool(8));
  c.expect(same_behavior(a, b), "pool 1 and 4 differ");
  c.expect(same_behavior(a, d), "pool 1 and 8 differ");
  for (const auto* srm : {&a, &b, &d})
    c.expect(csv_rows(export_csv(*srm)) == sm.tests.size() * sm.versions.size(), "cell count");

  auto crashing = sm;
  crashing.versions[2].source = "import os\ndef gcd(a, b):\n    os._exit(9)\n";
  for (auto cfg : {pool(4), pool(8)}) {
    cfg.worker_command["python"] = NV_STUBWORKER_PATH;
    auto srm = execute(crashing, cfg);
    for (std::size_t t = 0; t < srm.test_count(); ++t)
      for (std::size_t v = 0; v < srm.version_count(); ++v) {
        if (v == 2) c.expect(srm.cell(t, v).status == Status::crash, "crash column not marked crash");
        else c.expect(output_vector(srm, t, v) == output_vector(a, t, v), "crash leaked into another column");
      }
  }
}

void srm_persistence(Check& c) {
  auto dir = scratch("persist");
  std::vector<StimulusResponseMatrix> srms{execute(fixtures::gcd_kill_sm(), pool(4)), fixtures::voting_fixture()};
  for (std::size_t i = 0; i < srms.size(); ++i) {
    auto p1 = dir / ("a" + std::to_string(i) + ".jsonl");
    auto p2 = dir / ("b" + std::to_string(i) + ".jsonl");
    save_srm(srms[i], p1);
    save_srm(load_srm(p1), p2);
    c.expect(read_text_file(p1) == read_text_file(p2), "save-load-save not byte-identical");
    c.expect(csv_rows(export_csv(srms[i])) == srms[i].test_count() * srms[i].version_count(),
             "CSV rows differ from cell count");
  }
}

void ranking_invariants(Check& c) {
  auto srm = execute(fixtures::gcd_kill_sm(), pool(4));
  auto prompt = sheets_from_prompt(fixtures::kGcdPrompt).sheets;
  auto verdict = vote_cluster_based(srm);
  auto ranking = rank_versions(srm, prompt, &verdict);
  std::set<std::string> ranked;
  for (const auto& e : ranking) ranked.insert(e.version_id);
  for (std::size_t v = 0; v < srm.version_count(); ++v) {
    const auto& id = srm.stimulus().versions[v].version_id;
    // Brute-force prompt check: observed output equals the asserted literal.
    bool passes = srm.cell(0, v).row_outputs == std::vector<Value>{Value(1)} &&
                  srm.cell(1, v).row_outputs == std::vector<Value>{Value(5)};
    c.expect(passes == (ranked.count(id) == 1), id + " hard filter mismatch");
  }
  c.expect(ranked.size() < srm.version_count(), "fixture has no prompt failure to filter");
  auto scaled = rank_versions(srm.with_scaled_timing(7), prompt, &verdict);
  bool same = scaled.size() == ranking.size();
  for (std::size_t i = 0; same && i < ranking.size(); ++i) same = scaled[i].version_id == ranking[i].version_id;
  c.expect(same, "ordering changed when wall times were scaled by 7");
}

}  // namespace

int main() {
  report("gcd recommendation with the mock provider", e2e_recommend);
  report("voting fixture oracle structure", oracle_structure);
  report("kill matrix equals brute force", kill_matrix_equivalence);
  report("minimization soundness", minimization_soundness);
  report("arena determinism and shape", arena_determinism);
  report("matrix persistence", srm_persistence);
  report("ranking invariants", ranking_invariants);
  std::cout << (7 - failures) << "/7 criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
