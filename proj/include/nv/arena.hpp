#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "nv/matrix.hpp"
#include "nv/workerproto.hpp"

namespace nv {

// Worker command that runs candidates on the built-in interpreter inside the
// arena process instead of spawning a child.
inline constexpr std::string_view kBuiltinStub = "builtin:stub";

struct ArenaConfig {
  int pool_size = 4;
  std::int64_t wall_ms = 2000;  // per invocation
  std::int64_t mem_mb = 256;
  std::map<std::string, std::string> worker_command{{"python", std::string(kBuiltinStub)}};
  int retry_on_crash = 0;
  // Keep one worker process per version across its cells. Honored only
  // when retry_on_crash == 0.
  bool reuse_processes = false;
  std::shared_ptr<std::atomic<bool>> cancel;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

// Throws UsageError on out-of-range fields.
void validate_config(const ArenaConfig& cfg);

// Concrete inputs for one row: references are replaced by the outputs of
// the rows they name. Throws RefError for a reference that does not point at
// an already produced, non-sentinel output.
std::vector<Value> resolve_refs(std::span<const Cell> inputs, int row_index,
                                std::span<const Value> produced);

// Runs every (test, version) cell and assembles the SRM. Throws
// WorkerUnavailableError when a needed worker cannot be started and
// AbortedError when cancelled.
StimulusResponseMatrix execute(const StimulusMatrix& sm, const ArenaConfig& cfg);

// Converts a worker response for a sheet of `rows` rows into a cell
// observation; `wall_us` is the arena-side measurement.
Observation observation_from_response(const ExecuteResponse& resp, std::size_t rows,
                                      std::int64_t wall_us);

// ---- built-in stub worker

struct StubResult {
  ExecuteResponse response;
  std::optional<int> crash_exit_code;  // candidate asked the process to die
};

StubResult stub_execute(const ExecuteRequest& req);

// `--serve` loop over line streams. Returns when input ends, or calls
// std::_Exit when a candidate crashes the process.
int stub_serve(std::istream& in, std::ostream& out);

}  // namespace nv
