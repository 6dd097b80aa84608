#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nv/matrix.hpp"
#include "nv/oracle.hpp"

namespace nv {

struct KillMatrix {
  enum class Reference { oracle, base_version };
  Reference reference = Reference::oracle;
  std::string base_id;  // set for base_version
  std::vector<std::string> test_ids;
  std::vector<std::string> version_ids;
  std::vector<std::vector<bool>> kills;  // [test][version]
  std::vector<std::string> equivalent_versions;

  std::optional<std::size_t> base_index() const;
  // Versions killed by at least one test in `tests`.
  std::vector<bool> killed_by(const std::vector<std::size_t>& tests) const;
};

// Throws UndecidedOracleError when the verdict leaves a test undecided.
KillMatrix kill_matrix(const StimulusResponseMatrix& srm, const OracleVerdict& verdict);
// Throws UnknownVersionError for an id not in the matrix.
KillMatrix kill_matrix(const StimulusResponseMatrix& srm, std::string_view base_version_id);

struct KillScore {
  double raw = 0;
  std::optional<double> adjusted;  // nullopt when every candidate is equivalent
  std::size_t killed = 0;
  std::size_t candidates = 0;   // versions other than the reference
  std::size_t killable = 0;     // candidates minus equivalents
};

KillScore kill_score(const KillMatrix& km, const std::vector<std::size_t>& tests);
KillScore kill_score(const KillMatrix& km);  // all tests

// Greedy cover of the killed set, ties by lower test index, followed by a
// pass that drops picks made redundant by later ones. Indices in pick order.
std::vector<std::size_t> minimize_tests(const KillMatrix& km);

struct Discrepancy {
  std::string test_id;
  std::string version_id;
  std::vector<std::string> base_outputs;
  std::vector<std::string> version_outputs;
};

struct DiffReport {
  std::string base_id;
  std::vector<Discrepancy> entries;  // test-major, then version order
  std::vector<std::pair<std::string, std::size_t>> per_version;  // differing tests, every non-base version
};

DiffReport diff_report(const StimulusResponseMatrix& srm, std::string_view base_version_id);
nlohmann::ordered_json diff_to_json(const DiffReport& r);
std::string diff_to_text(const DiffReport& r);

struct RankingWeights {
  double w_prompt_pass = 0.55;
  double w_oracle_agree = 0.25;
  double w_speed = 0.10;
  double w_static = 0.10;
};

// Throws UsageError unless all weights are non-negative and sum to 1.
void validate_weights(const RankingWeights& w);

struct RankEntry {
  std::string version_id;
  double score = 0;
  double prompt_pass = 0;
  double oracle_agree = 0;
  double speed = 0;
  double static_size = 0;
};

// Versions failing any prompt assertion (matched by sheet id against the
// matrix tests) are dropped; survivors are scored and sorted. Throws
// NoSurvivorsError when nothing survives.
std::vector<RankEntry> rank_versions(const StimulusResponseMatrix& srm,
                                     const std::vector<SequenceSheet>& prompt_tests,
                                     const OracleVerdict* verdict,
                                     const RankingWeights& weights = {});

// True when version column `v` satisfies every assertion of `sheet`, which
// must be test `t` of the matrix.
bool passes_assertions(const StimulusResponseMatrix& srm, std::size_t t, std::size_t v,
                       const SequenceSheet& sheet);

nlohmann::ordered_json kill_matrix_to_json(const KillMatrix& km);
nlohmann::ordered_json kill_score_to_json(const KillScore& s);
nlohmann::ordered_json ranking_to_json(const std::vector<RankEntry>& ranking);

// "V2" < "V10": digit runs compare by value.
bool natural_less(std::string_view a, std::string_view b);

}  // namespace nv
