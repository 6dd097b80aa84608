#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "brute.hpp"
#include "fixtures.hpp"
#include "nv/analysis.hpp"
#include "nv/arena.hpp"
#include "nv/errors.hpp"

using namespace nv;
using namespace brute;

namespace {

const StimulusResponseMatrix& gcd_srm() {
  static const auto srm = [] {
    ArenaConfig cfg;
    cfg.pool_size = 4;
    return execute(fixtures::gcd_kill_sm(), cfg);
  }();
  return srm;
}

}  // namespace

TEST_CASE("gcd kill matrix against a correct base") {
  const auto& srm = gcd_srm();
  auto km = kill_matrix(srm, "V1");
  CHECK(km.kills == brute_kills(srm, 0));
  CHECK(km.equivalent_versions == std::vector<std::string>{"V2"});
  auto s = kill_score(km);
  CHECK(s.raw == doctest::Approx(4.0 / 5.0));
  REQUIRE(s.adjusted);
  CHECK(*s.adjusted == doctest::Approx(1.0));
  CHECK(km.kills[2][3]);  // swapped mod caught by gcd(6,18)
  CHECK(km.kills[3][5]);  // missing abs caught by gcd(4,-6)
  CHECK_FALSE(km.kills[0][3]);
  CHECK_THROWS_AS(kill_matrix(srm, "V99"), UnknownVersionError);
}

TEST_CASE("kill matrix from an oracle verdict") {
  const auto& srm = gcd_srm();
  auto verdict = vote_cluster_based(srm);
  // Two correct versions form the largest cluster.
  CHECK(verdict.correct_versions == std::vector<std::string>{"V1", "V2"});
  auto km = kill_matrix(srm, verdict);
  CHECK(km.kills == brute_kills(srm, 0));
  CHECK(km.equivalent_versions == std::vector<std::string>{"V1", "V2"});
  auto s = kill_score(km);
  CHECK(s.raw == doctest::Approx(4.0 / 6.0));

  auto tie = fixtures::srm_from_outputs({{Value(1)}, {Value(2)}});
  CHECK_THROWS_AS(kill_matrix(tie, vote_test_based(tie)), UndecidedOracleError);
}

TEST_CASE("kill matrix matches the brute-force comparator on random fixtures") {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 200; ++iter) {
    std::size_t nv = 1 + rng() % 8, nt = 1 + rng() % 8;
    std::vector<std::vector<Value>> cols(nv);
    for (auto& c : cols)
      for (std::size_t t = 0; t < nt; ++t)
        c.push_back(rng() % 7 == 0 ? Value(Sentinel::error) : Value(static_cast<std::int64_t>(rng() % 3)));
    auto srm = fixtures::srm_from_outputs(cols);
    auto base = rng() % nv;
    auto km = kill_matrix(srm, srm.stimulus().versions[base].version_id);
    CHECK(km.kills == brute_kills(srm, base));
    for (const auto& id : km.equivalent_versions) {
      auto v = *srm.stimulus().find_version(id);
      CHECK(v != base);
      for (std::size_t t = 0; t < nt; ++t) CHECK_FALSE(km.kills[t][v]);
    }
  }
}

TEST_CASE("kill score edge cases") {
  auto srm = fixtures::srm_from_outputs({{Value(1)}, {Value(1)}, {Value(1)}});
  auto km = kill_matrix(srm, "V1");
  auto s = kill_score(km);
  CHECK(s.raw == 0.0);
  CHECK_FALSE(s.adjusted);
  auto e = kill_score(kill_matrix(gcd_srm(), "V1"), {});
  CHECK(e.raw == 0.0);
  REQUIRE(e.adjusted);
  CHECK(*e.adjusted == 0.0);
}

TEST_CASE("property: kill score is monotone in the test subset") {
  std::mt19937_64 rng(8);
  for (int iter = 0; iter < 100; ++iter) {
    auto km = random_km(rng, 8, 8);
    km.reference = KillMatrix::Reference::base_version;
    km.base_id = km.version_ids[0];
    for (auto& row : km.kills) row[0] = false;
    std::vector<std::size_t> subset;
    double prev_raw = 0, prev_adj = 0;
    std::vector<std::size_t> order(km.test_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (auto t : order) {
      subset.push_back(t);
      auto s = kill_score(km, subset);
      CHECK(s.raw >= prev_raw);
      prev_raw = s.raw;
      if (s.adjusted) {
        CHECK(*s.adjusted >= prev_adj);
        prev_adj = *s.adjusted;
      }
    }
  }
}

TEST_CASE("minimization examples") {
  KillMatrix km;
  km.test_ids = {"a", "b", "c"};
  km.version_ids = {"V1", "V2", "V3"};
  km.kills = {{true, true, false}, {false, true, true}, {false, false, true}};
  CHECK(minimize_tests(km) == std::vector<std::size_t>{0, 1});
  CHECK(optimal_cover(km) == 2);

  km.kills = {{false, false, false}, {true, true, true}, {true, false, false}};
  CHECK(minimize_tests(km) == std::vector<std::size_t>{1});

  km.kills = {{false, false, false}, {false, false, false}, {false, false, false}};
  CHECK(minimize_tests(km).empty());

  // Greedy takes the wide test first; the later picks make it redundant.
  KillMatrix trap;
  trap.test_ids = {"wide", "x", "y", "z"};
  trap.version_ids = {"V1", "V2", "V3", "V4", "V5", "V6"};
  trap.kills = {{true, true, true, false, false, false},
                {true, false, false, true, false, false},
                {false, true, false, false, true, false},
                {false, false, true, false, false, true}};
  CHECK(minimize_tests(trap) == std::vector<std::size_t>{1, 2, 3});
}

TEST_CASE("property: minimization keeps coverage, has no redundant test, meets the greedy bound") {
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 300; ++iter) {
    auto km = random_km(rng, 10, 10);
    std::vector<std::size_t> all(km.test_ids.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto full = km.killed_by(all);
    auto min = minimize_tests(km);
    CHECK(km.killed_by(min) == full);
    CHECK(min.size() <= all.size());
    for (std::size_t i = 0; i < min.size(); ++i) {
      auto without = min;
      without.erase(without.begin() + static_cast<std::ptrdiff_t>(i));
      CHECK(count(km.killed_by(without)) < count(full));
    }
    auto opt = optimal_cover(km);
    CHECK(static_cast<double>(min.size()) <= harmonic(count(full)) * static_cast<double>(opt) + 1e-9);
  }
}

TEST_CASE("diff report agrees with the kill matrix") {
  const auto& srm = gcd_srm();
  auto r = diff_report(srm, "V1");
  auto km = kill_matrix(srm, "V1");
  std::set<std::pair<std::string, std::string>> from_km, from_diff;
  for (std::size_t t = 0; t < km.test_ids.size(); ++t)
    for (std::size_t v = 0; v < km.version_ids.size(); ++v)
      if (km.kills[t][v]) from_km.insert({km.test_ids[t], km.version_ids[v]});
  for (const auto& e : r.entries) from_diff.insert({e.test_id, e.version_id});
  CHECK(from_km == from_diff);
  auto j = diff_to_json(r);
  CHECK(j["summary"]["V2"] == 0);
  CHECK(j["summary"]["V3"] == 3);  // returns a: right only on gcd(6,18)
  auto text = diff_to_text(r);
  CHECK(text.find("g2") != std::string::npos);
  CHECK_THROWS_AS(diff_report(srm, "nope"), UnknownVersionError);

  auto same = fixtures::srm_from_outputs({{Value(1)}, {Value(1)}});
  CHECK(diff_report(same, "V1").entries.empty());
}

TEST_CASE("ranking: hard filter, weights, ordering") {
  const auto& srm = gcd_srm();
  auto prompt = sheets_from_prompt(fixtures::kGcdPrompt).sheets;
  auto verdict = vote_cluster_based(srm);
  auto ranking = rank_versions(srm, prompt, &verdict);
  // V3 (returns a) fails gcd(3,7)=1; the rest pass both prompt tests.
  std::set<std::string> ids;
  for (const auto& e : ranking) ids.insert(e.version_id);
  CHECK(ids == std::set<std::string>{"V1", "V2", "V4", "V5", "V6"});
  for (const auto& e : ranking) {
    auto v = *srm.stimulus().find_version(e.version_id);
    CHECK(passes_assertions(srm, 0, v, prompt[0]));
    CHECK(passes_assertions(srm, 1, v, prompt[1]));
  }
  CHECK((ranking[0].version_id == "V1" || ranking[0].version_id == "V2"));
  for (std::size_t i = 1; i < ranking.size(); ++i) CHECK(ranking[i - 1].score >= ranking[i].score);

  auto scaled = rank_versions(srm.with_scaled_timing(7), prompt, &verdict);
  REQUIRE(scaled.size() == ranking.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) CHECK(scaled[i].version_id == ranking[i].version_id);

  RankingWeights bad{0.5, 0.5, 0.5, 0.0};
  CHECK_THROWS_AS(rank_versions(srm, prompt, &verdict, bad), UsageError);
  RankingWeights negative{1.1, -0.1, 0.0, 0.0};
  CHECK_THROWS_AS(validate_weights(negative), UsageError);
}

TEST_CASE("ranking: only survivor wins, none survive") {
  auto sm = fixtures::gcd_kill_sm();
  sm.tests.resize(2);
  sm.versions = {sm.versions[2], sm.versions[0]};
  sm = build_sm("gcd", sm.signature, sm.tests, {fixtures::version(fixtures::kReturnsA), fixtures::version(fixtures::kEuclid)});
  ArenaConfig cfg;
  auto srm = execute(sm, cfg);
  auto prompt = sheets_from_prompt(fixtures::kGcdPrompt).sheets;
  auto r = rank_versions(srm, prompt, nullptr);
  REQUIRE(r.size() == 1);
  CHECK(r[0].version_id == "V2");

  auto bad = build_sm("gcd", sm.signature, sm.tests,
                      {fixtures::version(fixtures::kReturnsA), fixtures::version("def gcd(a, b):\n    return 1\n")});
  CHECK_THROWS_AS(rank_versions(execute(bad, cfg), prompt, nullptr), NoSurvivorsError);
}

TEST_CASE("ranking: slower twin ranks second") {
  auto sm = fixtures::gcd_kill_sm();
  sm.tests.resize(2);
  const char* slow = R"(import time
def gcd(a, b):
    time.sleep(0.02)
    while b:
        a, b = b, a % b
    return abs(a)
)";
  const char* fast = R"(import time
def gcd(a, b):
    time.sleep(0.01)
    while b:
        a, b = b, a % b
    return abs(a)
)";
  sm = build_sm("gcd", sm.signature, sm.tests, {fixtures::version(slow), fixtures::version(fast)});
  ArenaConfig cfg;
  cfg.pool_size = 1;
  auto srm = execute(sm, cfg);
  auto prompt = sheets_from_prompt(fixtures::kGcdPrompt).sheets;
  auto verdict = vote_cluster_based(srm);
  auto r = rank_versions(srm, prompt, &verdict);
  REQUIRE(r.size() == 2);
  CHECK(r[0].version_id == "V2");
  CHECK(r[1].speed < 0.8);
}

TEST_CASE("natural version order") {
  CHECK(natural_less("V2", "V10"));
  CHECK_FALSE(natural_less("V10", "V2"));
  CHECK(natural_less("V1", "V1a"));
  CHECK_FALSE(natural_less("V3", "V3"));
}
