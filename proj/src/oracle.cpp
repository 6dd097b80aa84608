#include "nv/oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "nv/errors.hpp"

namespace nv {

namespace {

void require_nonempty(const StimulusResponseMatrix& srm) {
  if (srm.version_count() == 0 || srm.test_count() == 0)
    throw EmptyMatrixError("oracle needs at least one test and one version");
}

// FNV-1a, printed as 16 hex digits.
std::string hash_text(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool has_sentinel(const std::vector<std::string>& outputs) {
  return std::any_of(outputs.begin(), outputs.end(), [](const std::string& s) { return !s.empty() && s[0] == '#'; });
}

// Versions matching every decided expectation; none when a test is undecided.
std::vector<std::string> certify(const StimulusResponseMatrix& srm, const OracleVerdict& verdict) {
  std::vector<std::string> out;
  if (!verdict.all_decided()) return out;
  for (std::size_t v = 0; v < srm.version_count(); ++v) {
    bool ok = true;
    for (std::size_t t = 0; t < srm.test_count() && ok; ++t)
      ok = verdict.per_test[t].expectation.matches(output_vector(srm, t, v));
    if (ok) out.push_back(srm.stimulus().versions[v].version_id);
  }
  return out;
}

void apply_sentinel_guard(OracleVerdict& verdict, const VoteOptions& opts) {
  for (std::size_t t = 0; t < verdict.per_test.size(); ++t) {
    const auto& e = verdict.per_test[t].expectation.expected;
    if (e && has_sentinel(*e)) {
      verdict.degenerate = true;
      verdict.warnings.push_back("degenerate: expected output of test " + std::to_string(t) +
                                 " is a failure sentinel");
    }
  }
  if (verdict.degenerate && !opts.allow_degenerate) verdict.correct_versions.clear();
}

}  // namespace

std::string_view to_string(OracleStrategy s) {
  switch (s) {
    case OracleStrategy::test_based: return "test_based";
    case OracleStrategy::cluster_based: return "cluster_based";
    case OracleStrategy::prompt_assertions: return "prompt_assertions";
  }
  return "?";
}

bool parse_strategy(std::string_view text, OracleStrategy& out) {
  if (text == "test_based" || text == "test") out = OracleStrategy::test_based;
  else if (text == "cluster_based" || text == "cluster") out = OracleStrategy::cluster_based;
  else if (text == "prompt_assertions" || text == "prompt") out = OracleStrategy::prompt_assertions;
  else return false;
  return true;
}

bool OracleVerdict::all_decided() const {
  return std::all_of(per_test.begin(), per_test.end(), [](const TestVerdict& t) { return t.expectation.decided(); });
}

std::vector<TestExpectation> OracleVerdict::expectations() const {
  std::vector<TestExpectation> out;
  for (const auto& t : per_test) out.push_back(t.expectation);
  return out;
}

std::vector<std::vector<std::size_t>> behavior_clusters(const StimulusResponseMatrix& srm) {
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t v = 0; v < srm.version_count(); ++v) {
    auto [it, inserted] = index.emplace(behavior_signature(srm, v), clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].push_back(v);
  }
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return clusters;
}

OracleVerdict vote_test_based(const StimulusResponseMatrix& srm, const VoteOptions& opts) {
  require_nonempty(srm);
  OracleVerdict verdict;
  verdict.strategy = OracleStrategy::test_based;
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    std::map<std::vector<std::string>, int> counts;
    for (std::size_t v = 0; v < srm.version_count(); ++v) ++counts[output_vector(srm, t, v)];
    int best = 0, holders = 0;
    const std::vector<std::string>* winner = nullptr;
    for (const auto& [vec, n] : counts) {
      if (n > best) {
        best = n;
        holders = 1;
        winner = &vec;
      } else if (n == best) {
        ++holders;
      }
    }
    TestVerdict tv;
    tv.support = best;
    if (holders == 1) tv.expectation.expected = *winner;
    else verdict.warnings.push_back("tie for the most common output on test " + std::to_string(t));
    verdict.per_test.push_back(std::move(tv));
  }
  verdict.correct_versions = certify(srm, verdict);
  apply_sentinel_guard(verdict, opts);
  return verdict;
}

OracleVerdict vote_cluster_based(const StimulusResponseMatrix& srm, const VoteOptions& opts) {
  require_nonempty(srm);
  OracleVerdict verdict;
  verdict.strategy = OracleStrategy::cluster_based;
  auto groups = behavior_clusters(srm);
  std::vector<Cluster> clusters;
  for (const auto& g : groups) {
    Cluster c;
    c.signature_hash = hash_text(behavior_signature(srm, g.front()));
    for (auto v : g) c.members.push_back(srm.stimulus().versions[v].version_id);
    clusters.push_back(std::move(c));
  }
  verdict.clusters = std::move(clusters);

  const bool unique = groups.size() == 1 || groups[0].size() > groups[1].size();
  verdict.per_test.resize(srm.test_count());
  if (!unique) {
    verdict.warnings.push_back("tie between the largest clusters (size " + std::to_string(groups[0].size()) + ")");
    return verdict;
  }
  const auto rep = groups[0].front();
  for (std::size_t t = 0; t < srm.test_count(); ++t) {
    verdict.per_test[t].expectation.expected = output_vector(srm, t, rep);
    verdict.per_test[t].support = static_cast<int>(groups[0].size());
  }
  for (auto v : groups[0]) verdict.correct_versions.push_back(srm.stimulus().versions[v].version_id);
  apply_sentinel_guard(verdict, opts);
  return verdict;
}

OracleVerdict vote(const StimulusResponseMatrix& srm, OracleStrategy strategy, const VoteOptions& opts) {
  switch (strategy) {
    case OracleStrategy::test_based: return vote_test_based(srm, opts);
    case OracleStrategy::cluster_based: return vote_cluster_based(srm, opts);
    case OracleStrategy::prompt_assertions: {
      auto verdict = oracle_from_prompt(srm.stimulus().tests);
      verdict.correct_versions = certify(srm, verdict);
      return verdict;
    }
  }
  throw UsageError("unknown oracle strategy");
}

OracleVerdict oracle_from_prompt(const std::vector<SequenceSheet>& tests) {
  if (tests.empty()) throw EmptyMatrixError("no tests to take assertions from");
  OracleVerdict verdict;
  verdict.strategy = OracleStrategy::prompt_assertions;
  for (const auto& sheet : tests) {
    if (sheet.expected.empty())
      throw MissingAssertionError("sheet '" + sheet.sheet_id + "' has no expected outputs");
    auto asserted = sheet.expected;
    std::sort(asserted.begin(), asserted.end(),
              [](const Assertion& a, const Assertion& b) { return a.row_index < b.row_index; });
    TestVerdict tv;
    tv.expectation.expected.emplace();
    for (const auto& a : asserted) {
      tv.expectation.rows.push_back(static_cast<std::size_t>(a.row_index - 1));
      tv.expectation.expected->push_back(canonical_encode(a.expected));
    }
    // A fully asserted sheet compares whole vectors.
    if (asserted.size() == sheet.rows.size()) tv.expectation.rows.clear();
    verdict.per_test.push_back(std::move(tv));
  }
  return verdict;
}

nlohmann::ordered_json verdict_to_json(const OracleVerdict& v) {
  nlohmann::ordered_json j;
  j["strategy"] = std::string(to_string(v.strategy));
  auto per_test = nlohmann::ordered_json::array();
  for (const auto& t : v.per_test) {
    nlohmann::ordered_json e;
    e["expected"] = t.expectation.expected ? nlohmann::ordered_json(*t.expectation.expected)
                                           : nlohmann::ordered_json("UNDECIDED");
    e["support"] = t.support;
    if (!t.expectation.rows.empty()) e["rows"] = t.expectation.rows;
    per_test.push_back(std::move(e));
  }
  j["per_test"] = std::move(per_test);
  j["correct"] = v.correct_versions;
  if (v.clusters) {
    auto cs = nlohmann::ordered_json::array();
    for (const auto& c : *v.clusters) {
      nlohmann::ordered_json cj;
      cj["signature"] = c.signature_hash;
      cj["members"] = c.members;
      cs.push_back(std::move(cj));
    }
    j["clusters"] = std::move(cs);
  } else {
    j["clusters"] = nullptr;
  }
  j["degenerate"] = v.degenerate;
  j["warnings"] = v.warnings;
  return j;
}

OracleVerdict verdict_from_json(const nlohmann::json& j) {
  try {
    OracleVerdict v;
    if (!parse_strategy(j.at("strategy").get<std::string>(), v.strategy))
      throw FormatError("unknown oracle strategy in verdict");
    for (const auto& e : j.at("per_test")) {
      TestVerdict tv;
      if (e.at("expected").is_array()) tv.expectation.expected = e["expected"].get<std::vector<std::string>>();
      tv.support = e.at("support").get<int>();
      if (e.contains("rows")) tv.expectation.rows = e["rows"].get<std::vector<std::size_t>>();
      v.per_test.push_back(std::move(tv));
    }
    v.correct_versions = j.at("correct").get<std::vector<std::string>>();
    if (j.contains("clusters") && j["clusters"].is_array()) {
      v.clusters.emplace();
      for (const auto& c : j["clusters"])
        v.clusters->push_back({c.at("signature").get<std::string>(), c.at("members").get<std::vector<std::string>>()});
    }
    v.degenerate = j.value("degenerate", false);
    if (j.contains("warnings")) v.warnings = j["warnings"].get<std::vector<std::string>>();
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed verdict: ") + e.what());
  }
}

}  // namespace nv
