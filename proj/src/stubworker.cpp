#include <chrono>
#include <cstdlib>
#include <iostream>

#include "nv/arena.hpp"
#include "nv/errors.hpp"
#include "nv/pysub.hpp"

namespace nv {

namespace {

std::int64_t micros_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
}

Status status_of(pysub::Outcome o) {
  switch (o) {
    case pysub::Outcome::ok: return Status::ok;
    case pysub::Outcome::error: return Status::error;
    case pysub::Outcome::timeout: return Status::timeout;
    case pysub::Outcome::crash: return Status::crash;
  }
  return Status::crash;
}

std::string describe(const pysub::CallResult& r) {
  if (r.error_type.empty()) return r.message;
  return r.message.empty() ? r.error_type : r.error_type + ": " + r.message;
}

}  // namespace

StubResult stub_execute(const ExecuteRequest& req) {
  const auto start = std::chrono::steady_clock::now();
  StubResult out;
  auto& resp = out.response;
  resp.task_id = req.task_id;

  auto fail_task = [&](std::string kind, std::string message) {
    resp.status = Status::error;
    resp.kind = std::move(kind);
    resp.meta = {{"message", std::move(message)}};
    resp.wall_us = micros_since(start);
    return out;
  };

  if (req.module.language_tag != "python")
    return fail_task("language", "the built-in worker only runs python candidates");

  std::shared_ptr<const pysub::Module> module;
  try {
    module = pysub::compile(req.module.source);
  } catch (const pysub::CompileError& e) {
    return fail_task("compile", e.what());
  }

  pysub::Limits limits;
  limits.wall = std::chrono::milliseconds(req.limits.wall_ms);
  limits.mem_mb = static_cast<std::size_t>(req.limits.mem_mb);

  pysub::Interpreter interp(module);
  auto loaded = interp.load(limits);
  if (loaded.outcome != pysub::Outcome::ok) {
    if (loaded.outcome == pysub::Outcome::crash) {
      out.crash_exit_code = loaded.exit_code;
      resp.status = Status::crash;
      resp.wall_us = micros_since(start);
      return out;
    }
    resp.status = status_of(loaded.outcome);
    resp.kind = "load";
    resp.meta = {{"message", describe(loaded)}};
    resp.wall_us = micros_since(start);
    return out;
  }
  if (!interp.has_function(req.module.entry))
    return fail_task("entry", "entry '" + req.module.entry + "' is not a function in the module");

  std::vector<Value> produced;
  std::string captured;
  for (std::size_t i = 0; i < req.sheet.size(); ++i) {
    const auto& row = req.sheet[i];
    const auto row_start = std::chrono::steady_clock::now();
    ResponseRow result;
    if (row.op == kCreateOp) {
      result.status = Status::error;
      result.message = "object creation rows need a class-level module";
    } else {
      std::vector<Value> args;
      try {
        args = resolve_refs(row.inputs, static_cast<int>(i + 1), produced);
      } catch (const RefError& e) {
        result.status = Status::error;
        result.message = e.what();
      }
      if (!result.message) {
        auto r = interp.call(row.op, args, limits);
        captured += interp.take_output();
        result.status = status_of(r.outcome);
        if (r.outcome == pysub::Outcome::ok) {
          result.value = r.value;
          produced.push_back(r.value);
        } else if (r.outcome == pysub::Outcome::crash) {
          out.crash_exit_code = r.exit_code;
        } else {
          result.message = describe(r);
        }
      }
    }
    result.wall_us = micros_since(row_start);
    const bool stop = result.status != Status::ok;
    resp.rows.push_back(std::move(result));
    if (stop) break;
  }
  resp.status = resp.rows.empty() || resp.rows.back().status == Status::ok ? Status::ok : resp.rows.back().status;
  if (!captured.empty()) resp.meta = {{"stdout", captured}};
  resp.wall_us = micros_since(start);
  return out;
}

int stub_serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (is_ping(line)) {
      out << encode_pong() << std::flush;
      continue;
    }
    ExecuteRequest req;
    try {
      req = decode_request(line);
    } catch (const ProtocolError& e) {
      ExecuteResponse bad;
      try {
        auto j = nlohmann::json::parse(line);
        if (j.is_object() && j.contains("task_id") && j["task_id"].is_string())
          bad.task_id = j["task_id"].get<std::string>();
      } catch (const nlohmann::json::exception&) {
      }
      bad.status = Status::error;
      bad.kind = "protocol";
      bad.meta = {{"message", e.what()}};
      out << encode_response(bad) << std::flush;
      continue;
    }
    auto result = stub_execute(req);
    if (result.crash_exit_code) {
      out.flush();
      std::_Exit(*result.crash_exit_code);
    }
    out << encode_response(result.response) << std::flush;
  }
  return 0;
}

}  // namespace nv
