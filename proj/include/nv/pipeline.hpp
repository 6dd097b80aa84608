#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nv/analysis.hpp"
#include "nv/arena.hpp"
#include "nv/oracle.hpp"
#include "nv/providers.hpp"

namespace nv {

// Workflow scripts (`.dgai`), one step per line:
//   step := verb [kind] (key=value)*
// Values are JSON literals; a bare word is taken as a string. `#` starts a
// comment outside string literals.
enum class Verb { generate, execute, oracle, killscore, minimize, diff, rank, emit };
std::string_view to_string(Verb v);

struct Step {
  Verb verb = Verb::execute;
  std::string kind;  // generate only: versions | tests
  nlohmann::ordered_json args = nlohmann::ordered_json::object();
  int line = 0;

  friend bool operator==(const Step& a, const Step& b) {
    return a.verb == b.verb && a.kind == b.kind && a.args == b.args;
  }
};

struct PipelineScript {
  std::vector<Step> steps;
  friend bool operator==(const PipelineScript&, const PipelineScript&) = default;
};

// Throws DslSyntaxError (with line and column) and DataflowError.
PipelineScript parse_pipeline(std::string_view text);
std::string render_pipeline(const PipelineScript& script);

struct PipelineContext {
  std::string prompt;
  Provider* version_provider = nullptr;
  Provider* test_provider = nullptr;  // defaults to version_provider
  ArenaConfig arena;
  RankingWeights weights;
  VoteOptions vote;
  std::uint64_t seed = 0;
  Sampling sampling;
  std::filesystem::path base_dir = ".";  // relative emit paths resolve here
  std::function<void(const std::string&)> log;
};

// Named slots written by the steps.
struct Artifacts {
  std::optional<std::vector<ModuleVersion>> versions;
  std::optional<std::vector<SequenceSheet>> tests;  // generated tests only
  std::optional<StimulusMatrix> sm;
  std::optional<StimulusResponseMatrix> srm;
  std::optional<OracleVerdict> verdict;
  std::optional<KillMatrix> km;
  std::optional<KillScore> killscore;
  std::optional<std::vector<std::size_t>> minimized;
  std::optional<DiffReport> diff;
  std::optional<std::vector<RankEntry>> ranking;
  std::vector<std::filesystem::path> emitted;
  std::vector<std::string> diagnostics;
};

// Runs the steps in order. A failing step raises StepError carrying the
// 1-based step index and the category of the original error; files emitted
// by earlier steps stay on disk.
Artifacts run_pipeline(const PipelineScript& script, PipelineContext& ctx);

// Slot names accepted by `emit artifact=`.
const std::vector<std::string>& slot_names();

}  // namespace nv
