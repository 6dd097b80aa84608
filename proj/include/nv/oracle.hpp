#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nv/matrix.hpp"

namespace nv {

enum class OracleStrategy { test_based, cluster_based, prompt_assertions };
std::string_view to_string(OracleStrategy s);
bool parse_strategy(std::string_view text, OracleStrategy& out);

struct TestVerdict {
  TestExpectation expectation;  // undecided when expectation.expected is empty
  int support = 0;              // versions exhibiting the expected vector
};

struct Cluster {
  std::string signature_hash;
  std::vector<std::string> members;  // version ids, column order
};

struct OracleVerdict {
  OracleStrategy strategy = OracleStrategy::test_based;
  std::vector<TestVerdict> per_test;
  std::vector<std::string> correct_versions;  // column order
  std::optional<std::vector<Cluster>> clusters;
  // The winning expectation contains a sentinel.
  bool degenerate = false;
  std::vector<std::string> warnings;

  bool all_decided() const;
  std::vector<TestExpectation> expectations() const;
};

struct VoteOptions {
  // Certify winners even when the expected outputs contain sentinels.
  bool allow_degenerate = false;
};

OracleVerdict vote_test_based(const StimulusResponseMatrix& srm, const VoteOptions& opts = {});
OracleVerdict vote_cluster_based(const StimulusResponseMatrix& srm, const VoteOptions& opts = {});
OracleVerdict vote(const StimulusResponseMatrix& srm, OracleStrategy strategy, const VoteOptions& opts = {});

// Expected outputs straight from sheet assertions. Only asserted rows are
// covered. Throws MissingAssertionError for a sheet without assertions.
OracleVerdict oracle_from_prompt(const std::vector<SequenceSheet>& tests);

// Groups versions by identical behavior signature; largest first, ties by
// first member's column.
std::vector<std::vector<std::size_t>> behavior_clusters(const StimulusResponseMatrix& srm);

nlohmann::ordered_json verdict_to_json(const OracleVerdict& v);
OracleVerdict verdict_from_json(const nlohmann::json& j);

}  // namespace nv
