#include "nv/arena.hpp"

#include <chrono>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "nv/errors.hpp"
#include "nv/process.hpp"

namespace nv {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t micros_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start).count();
}

struct CellTask {
  std::size_t test_index;
  std::size_t version_index;
};

// Outcome of one attempt at a cell.
struct Attempt {
  Observation obs;
  bool keep_process = false;
};

class CellRunner {
 public:
  CellRunner(const StimulusMatrix& sm, const ArenaConfig& cfg) : sm_(sm), cfg_(cfg) {}

  Observation run(const CellTask& task) {
    const auto& sheet = sm_.tests[task.test_index];
    const auto& version = sm_.versions[task.version_index];
    const std::string& command = cfg_.worker_command.at(version.language_tag);
    ModuleSpec module{version.language_tag, version.source, version.entry};
    Observation obs;
    for (int attempt = 0; attempt <= cfg_.retry_on_crash; ++attempt) {
      auto req = request_for("t" + std::to_string(task.test_index) + "-v" + std::to_string(task.version_index) +
                                 "-a" + std::to_string(attempt),
                             module, sheet, {cfg_.wall_ms, cfg_.mem_mb});
      obs = command == kBuiltinStub ? run_builtin(req, sheet.rows.size())
                                    : run_process(req, sheet.rows.size(), command, task.version_index);
      if (obs.status != Status::crash) break;
    }
    return obs;
  }

 private:
  Observation run_builtin(const ExecuteRequest& req, std::size_t rows) {
    const auto start = Clock::now();
    auto result = stub_execute(req);
    const auto wall = micros_since(start);
    if (result.crash_exit_code) {
      std::vector<Value> outs;
      std::vector<std::int64_t> per_row;
      for (const auto& r : result.response.rows) {
        if (r.status != Status::ok) break;
        outs.push_back(*r.value);
        per_row.push_back(r.wall_us);
      }
      return make_failed_observation(Status::crash, rows, std::move(outs), std::move(per_row), wall);
    }
    return observation_from_response(result.response, rows, wall);
  }

  Observation run_process(const ExecuteRequest& req, std::size_t rows, const std::string& command,
                          std::size_t version_index) {
    const bool reuse = cfg_.reuse_processes && cfg_.retry_on_crash == 0;
    if (!reuse || cached_version_ != version_index) cached_.reset();
    std::unique_ptr<ChildProcess> proc = std::move(cached_);
    if (!proc) {
      auto argv = split_command(command);
      argv.emplace_back("--serve");
      SpawnOptions opts;
      opts.address_space_bytes = static_cast<std::size_t>(cfg_.mem_mb + 512) << 20;
      opts.cpu_seconds = static_cast<int>(outer_budget_ms(rows) / 1000 + 2);
      try {
        proc = ChildProcess::spawn(argv, opts);
      } catch (const SpawnError& e) {
        throw WorkerUnavailableError(e.what());
      }
    }
    const auto start = Clock::now();
    const auto deadline = start + std::chrono::milliseconds(outer_budget_ms(rows));
    std::string line;
    auto read = proc->write_all(encode_request(req)) ? proc->read_line(line, deadline) : ChildProcess::Read::eof;
    const auto wall = micros_since(start);
    if (read == ChildProcess::Read::timeout) {
      proc->kill();
      return make_failed_observation(Status::timeout, rows, {}, {}, wall);
    }
    if (read != ChildProcess::Read::line) return make_failed_observation(Status::crash, rows, {}, {}, wall);
    ExecuteResponse resp;
    try {
      resp = decode_response(line, req.task_id, rows);
    } catch (const ProtocolError&) {
      return make_failed_observation(Status::crash, rows, {}, {}, wall);
    }
    auto obs = observation_from_response(resp, rows, wall);
    if (reuse && obs.status != Status::crash && obs.status != Status::timeout) {
      cached_ = std::move(proc);
      cached_version_ = version_index;
    }
    return obs;
  }

  // Outer kill deadline: the worker's own per-row limit plus margin, kept
  // below twice the per-row budget so the timeout bound holds.
  std::int64_t outer_budget_ms(std::size_t rows) const {
    auto n = static_cast<std::int64_t>(std::max<std::size_t>(rows, 1));
    return n * cfg_.wall_ms * 3 / 2 + cfg_.wall_ms / 4;
  }

  const StimulusMatrix& sm_;
  const ArenaConfig& cfg_;
  std::unique_ptr<ChildProcess> cached_;
  std::size_t cached_version_ = static_cast<std::size_t>(-1);
};

void check_worker(const std::string& language, const std::string& command) {
  if (command == kBuiltinStub) return;
  auto argv = split_command(command);
  if (argv.empty()) throw WorkerUnavailableError("empty worker command for '" + language + "'");
  argv.emplace_back("--serve");
  std::unique_ptr<ChildProcess> proc;
  try {
    proc = ChildProcess::spawn(argv, {});
  } catch (const SpawnError& e) {
    throw WorkerUnavailableError("worker for '" + language + "': " + e.what());
  }
  std::string line;
  if (!proc->write_all(encode_ping()) ||
      proc->read_line(line, Clock::now() + std::chrono::milliseconds(2000)) != ChildProcess::Read::line ||
      !is_pong(line))
    throw WorkerUnavailableError("worker for '" + language + "' (" + command + ") did not answer ping");
}

}  // namespace

void validate_config(const ArenaConfig& cfg) {
  if (cfg.pool_size < 1) throw UsageError("arena.pool_size must be at least 1");
  if (cfg.wall_ms < 1) throw UsageError("arena.wall_ms must be at least 1");
  if (cfg.mem_mb < 1) throw UsageError("arena.mem_mb must be at least 1");
  if (cfg.retry_on_crash < 0) throw UsageError("retry_on_crash must be non-negative");
}

std::vector<Value> resolve_refs(std::span<const Cell> inputs, int row_index, std::span<const Value> produced) {
  std::vector<Value> out;
  out.reserve(inputs.size());
  for (const auto& cell : inputs) {
    if (const auto* v = std::get_if<Value>(&cell)) {
      out.push_back(*v);
      continue;
    }
    int k = std::get<CellRef>(cell).row;
    if (k < 1 || k >= row_index)
      throw RefError("row " + std::to_string(row_index) + " references A" + std::to_string(k) +
                     ", which is not an earlier row");
    if (static_cast<std::size_t>(k) > produced.size() || produced[static_cast<std::size_t>(k - 1)].is_sentinel())
      throw RefError("row " + std::to_string(row_index) + " references A" + std::to_string(k) +
                     ", which produced no value");
    out.push_back(produced[static_cast<std::size_t>(k - 1)]);
  }
  return out;
}

Observation observation_from_response(const ExecuteResponse& resp, std::size_t rows, std::int64_t wall_us) {
  std::vector<Value> outs;
  std::vector<std::int64_t> per_row;
  Status failed = Status::ok;
  for (const auto& r : resp.rows) {
    if (r.status != Status::ok) {
      failed = r.status;
      per_row.push_back(r.wall_us);
      break;
    }
    outs.push_back(*r.value);
    per_row.push_back(r.wall_us);
  }
  if (failed == Status::ok && resp.status == Status::ok && outs.size() == rows) {
    Observation obs;
    obs.status = Status::ok;
    obs.row_outputs = std::move(outs);
    obs.per_row_wall_us = std::move(per_row);
    obs.wall_us = wall_us;
    return obs;
  }
  if (failed == Status::ok) failed = resp.status == Status::ok ? Status::crash : resp.status;
  // Only outputs strictly before the failing row survive.
  if (outs.size() >= rows && rows > 0) outs.resize(rows - 1);
  return make_failed_observation(failed, rows, std::move(outs), std::move(per_row), wall_us);
}

StimulusResponseMatrix execute(const StimulusMatrix& sm, const ArenaConfig& cfg) {
  validate_config(cfg);
  if (sm.tests.empty() || sm.versions.empty()) throw UsageError("stimulus matrix has no tests or no versions");

  std::set<std::string> languages;
  for (const auto& v : sm.versions) languages.insert(v.language_tag);
  for (const auto& lang : languages) {
    auto it = cfg.worker_command.find(lang);
    if (it == cfg.worker_command.end())
      throw WorkerUnavailableError("no worker command configured for language '" + lang + "'");
    check_worker(lang, it->second);
  }

  // Version-major order lets a reusing runner keep its process warm.
  std::vector<CellTask> tasks;
  for (std::size_t v = 0; v < sm.version_count(); ++v)
    for (std::size_t t = 0; t < sm.test_count(); ++t) tasks.push_back({t, v});

  std::vector<Observation> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::mutex progress_mutex;

  auto cancelled = [&] { return cfg.cancel && cfg.cancel->load(); };
  auto worker = [&] {
    CellRunner runner(sm, cfg);
    while (!failed && !cancelled()) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      try {
        results[i] = runner.run(tasks[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        break;
      }
      auto n = ++done;
      if (cfg.progress) {
        std::lock_guard lock(progress_mutex);
        cfg.progress(n, tasks.size());
      }
    }
  };

  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.pool_size), tasks.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  if (cancelled() && done < tasks.size())
    throw AbortedError("execution cancelled after " + std::to_string(done.load()) + " of " +
                       std::to_string(tasks.size()) + " cells");

  StimulusResponseMatrix srm(sm);
  for (std::size_t i = 0; i < tasks.size(); ++i)
    srm.set(tasks[i].test_index, tasks[i].version_index, std::move(results[i]));
  return srm;
}

}  // namespace nv
