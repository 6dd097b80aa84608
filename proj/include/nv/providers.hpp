#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nv/sheets.hpp"

namespace nv {

enum class GenerationKind { versions, tests };
std::string_view to_string(GenerationKind k);
bool parse_generation_kind(std::string_view text, GenerationKind& out);

struct Sampling {
  double temperature = 0.8;
  int max_tokens = 1024;
};

struct GenerationRequest {
  std::string prompt_text;
  GenerationKind kind = GenerationKind::versions;
  int n = 1;
  std::uint64_t seed = 0;
  Sampling sampling;
};

// Throws UsageError for n < 1, negative temperature or max_tokens < 1.
void validate_request(const GenerationRequest& req);

struct ProviderResult {
  std::vector<std::string> items;  // sources or sheet texts
  std::string provider_id;
  nlohmann::json raw_metadata = nlohmann::json::object();
};

class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  // Raw items, possibly with duplicates.
  virtual ProviderResult fetch(const GenerationRequest& req) = 0;
};

// Validates, fetches, removes duplicates and keeps at most n items. Throws
// EmptyGenerationError when nothing remains.
ProviderResult generate(const GenerationRequest& req, Provider& provider);

// Collapses items that are byte-identical once trailing whitespace is
// stripped per line, line endings are LF and blank edge lines are dropped.
// First occurrence wins; the surviving text is the normalized form.
std::vector<std::string> dedup_normalize(const std::vector<std::string>& sources);
std::string normalize_source(std::string_view source);

// Parses generated test items one sheet each. Items that fail to parse or
// do not match `signature` are reported in `rejected` instead of aborting.
struct ParsedTests {
  std::vector<SequenceSheet> sheets;
  std::vector<std::string> rejected;  // "item <k>: <reason>"
};
ParsedTests parse_generated_tests(const std::vector<std::string>& items, const MethodSignature& signature,
                                  const std::string& id_prefix = "g");

// ---- mock provider

// Deterministic stand-in for a code model. Versions come from per-function
// templates (correct variants and seeded bugs) extended by mutation
// operators; tests are random single- or two-row sheets for the prompt's
// signature.
class MockProvider : public Provider {
 public:
  std::string id() const override { return "mock"; }
  ProviderResult fetch(const GenerationRequest& req) override;

  // Functions with built-in templates.
  static std::vector<std::string> known_functions();
};

enum class MutationOp { operator_swap, boundary_shift, branch_negation };
// Applies `op` at the `occurrence`-th applicable site; nullopt when the
// source has no such site.
std::optional<std::string> mutate(std::string_view source, MutationOp op, std::size_t occurrence = 0);

// ---- HTTP chat-completion provider

struct HttpProviderConfig {
  std::string url;    // full endpoint URL
  std::string token;  // bearer token, optional
  std::string model;
  int concurrency = 4;
  int per_request_n = 0;  // choices per request; 0 means all n in one request
  int timeout_ms = 60000;
  // Templates; `{prompt}` and `{signature}` are substituted.
  std::string versions_template =
      "Implement the following Python function. Reply with a single ```python code block containing only the "
      "function definition.\n\n{prompt}";
  std::string tests_template =
      "Write one new test for the function below as a sequence sheet inside a ``` block. Format:\n"
      "sheet <id> {signature}\n<row>,<function>,<arg>,...\nArguments are Python literals; A<k> refers to the "
      "result of row k.\n\n{prompt}";
  std::optional<std::filesystem::path> record_path;  // append {request,response} lines
  std::optional<std::filesystem::path> replay_path;  // answer from a transcript, no network
};

// Reads NV_PROVIDER_URL, NV_PROVIDER_TOKEN, NV_PROVIDER_MODEL over `base`.
HttpProviderConfig http_config_from_env(HttpProviderConfig base = {});

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);
  ~HttpProvider() override;
  std::string id() const override { return "http:" + cfg_.model; }
  ProviderResult fetch(const GenerationRequest& req) override;

  // Request bodies for `req`, in request-index order.
  std::vector<nlohmann::json> request_bodies(const GenerationRequest& req) const;

 private:
  struct Replay;
  HttpProviderConfig cfg_;
  std::unique_ptr<Replay> replay_;
};

// Code blocks from a completion: fenced blocks when present, else the
// whole trimmed text.
std::vector<std::string> extract_code_blocks(std::string_view content);

}  // namespace nv
