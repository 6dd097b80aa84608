#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nv/sheets.hpp"
#include "nv/value.hpp"

namespace nv {

enum class Origin { prompt_base, provider, manual };
std::string_view to_string(Origin origin);
Origin parse_origin(std::string_view text);

struct StaticMetrics {
  std::int64_t source_bytes = 0;
  std::int64_t line_count = 0;
  friend bool operator==(const StaticMetrics&, const StaticMetrics&) = default;
};

StaticMetrics measure_source(std::string_view source);

struct ModuleVersion {
  std::string version_id;  // empty until build_sm assigns V1..VN
  std::string language_tag = "python";
  std::string source;
  std::string entry;
  Origin origin = Origin::provider;
  StaticMetrics static_metrics;

  friend bool operator==(const ModuleVersion&, const ModuleVersion&) = default;
};

// Tests (rows) x module versions (columns).
struct StimulusMatrix {
  std::string problem_id;
  MethodSignature signature;
  std::vector<SequenceSheet> tests;
  std::vector<ModuleVersion> versions;

  std::size_t test_count() const { return tests.size(); }
  std::size_t version_count() const { return versions.size(); }
  // Column index of `version_id`, or nullopt.
  std::optional<std::size_t> find_version(std::string_view version_id) const;

  friend bool operator==(const StimulusMatrix&, const StimulusMatrix&) = default;
};

// Assembles an SM in input order. Versions without an id become V<k> for
// their 1-based column; missing static metrics are measured.
StimulusMatrix build_sm(std::string problem_id, MethodSignature signature,
                        std::vector<SequenceSheet> tests,
                        std::vector<ModuleVersion> versions);

enum class Status { ok, error, timeout, crash };
std::string_view to_string(Status status);
bool parse_status(std::string_view text, Status& out);
Sentinel sentinel_for(Status status);

// Everything observed when running one sheet against one version.
struct Observation {
  Status status = Status::ok;
  std::vector<Value> row_outputs;
  std::int64_t wall_us = 0;
  std::vector<std::int64_t> per_row_wall_us;
  nlohmann::json extra;  // reserved; null when unused

  friend bool operator==(const Observation&, const Observation&) = default;
};

// Builds an observation for a sheet of `rows` rows in which rows before
// `failed_row` (0-based) produced `outputs` and the rest carry the sentinel
// for `status`.
Observation make_failed_observation(Status status, std::size_t rows,
                                    std::vector<Value> outputs,
                                    std::vector<std::int64_t> per_row_wall_us,
                                    std::int64_t wall_us);

class StimulusResponseMatrix {
 public:
  StimulusResponseMatrix() = default;
  // All cells start as empty observations; `set` fills them.
  explicit StimulusResponseMatrix(StimulusMatrix stimulus);

  const StimulusMatrix& stimulus() const { return stimulus_; }
  std::size_t test_count() const { return stimulus_.test_count(); }
  std::size_t version_count() const { return stimulus_.version_count(); }

  const Observation& cell(std::size_t test, std::size_t version) const;
  void set(std::size_t test, std::size_t version, Observation obs);

  // Replaces timing with a scaled copy (used for scale-invariance checks).
  StimulusResponseMatrix with_scaled_timing(std::int64_t factor) const;

  friend bool operator==(const StimulusResponseMatrix&,
                         const StimulusResponseMatrix&) = default;

 private:
  StimulusMatrix stimulus_;
  std::vector<Observation> cells_;  // row-major [test][version]
};

// Canonical encodings of one cell's row outputs (sentinels included).
std::vector<std::string> output_vector(const StimulusResponseMatrix& srm,
                                       std::size_t test, std::size_t version);

// Concatenation of a version's output vectors over all tests; two versions
// behave identically on the test set iff their signatures are equal.
std::string behavior_signature(const StimulusResponseMatrix& srm,
                               std::size_t version);

// True when structure and outputs agree; wall-clock fields are ignored.
bool same_behavior(const StimulusResponseMatrix& a,
                   const StimulusResponseMatrix& b);

// JSON Lines persistence: one header record, then one record per cell.
inline constexpr std::string_view kSrmFormat = "srm/1";

nlohmann::ordered_json sm_to_json(const StimulusMatrix& sm);
StimulusMatrix sm_from_json(const nlohmann::json& j);

std::string srm_to_jsonl(const StimulusResponseMatrix& srm);
StimulusResponseMatrix srm_from_jsonl(std::string_view text);
void save_srm(const StimulusResponseMatrix& srm, const std::filesystem::path& path);
StimulusResponseMatrix load_srm(const std::filesystem::path& path);

// Expected output vector per test; nullopt marks an undecided test. When
// `rows` is non-empty the expectation covers only those 0-based rows.
struct TestExpectation {
  std::optional<std::vector<std::string>> expected;
  std::vector<std::size_t> rows;

  bool decided() const { return expected.has_value(); }
  bool matches(const std::vector<std::string>& outputs) const;
};

// CSV with header `problem,test,version,status,wall_us,oracle_match`. The
// match column is 1/0 against `expectations`, or empty when no oracle is
// given or the test is undecided.
std::string export_csv(const StimulusResponseMatrix& srm,
                       const std::vector<TestExpectation>* expectations = nullptr);

struct CsvSource {
  const StimulusResponseMatrix* srm;
  const std::vector<TestExpectation>* expectations = nullptr;
};
// Several problems in one table with a single header.
std::string export_csv(std::span<const CsvSource> sources);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace nv
