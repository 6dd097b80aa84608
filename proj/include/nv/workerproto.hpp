#pragma once

// nv/1: the JSON Lines protocol spoken between the arena and execution
// workers over the worker's stdin/stdout.

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nv/matrix.hpp"
#include "nv/sheets.hpp"
#include "nv/value.hpp"

namespace nv {

inline constexpr std::string_view kProto = "nv/1";

struct ModuleSpec {
  std::string language_tag;
  std::string source;
  std::string entry;
  friend bool operator==(const ModuleSpec&, const ModuleSpec&) = default;
};

struct RequestRow {
  std::string op;
  std::vector<Cell> inputs;  // literals or references to earlier rows
  friend bool operator==(const RequestRow&, const RequestRow&) = default;
};

struct WireLimits {
  std::int64_t wall_ms = 2000;
  std::int64_t mem_mb = 256;
  friend bool operator==(const WireLimits&, const WireLimits&) = default;
};

struct ExecuteRequest {
  std::string task_id;
  ModuleSpec module;
  std::vector<RequestRow> sheet;
  WireLimits limits;
  friend bool operator==(const ExecuteRequest&, const ExecuteRequest&) = default;
};

struct ResponseRow {
  Status status = Status::ok;
  std::optional<Value> value;
  std::optional<std::string> message;
  std::int64_t wall_us = 0;
  friend bool operator==(const ResponseRow&, const ResponseRow&) = default;
};

struct ExecuteResponse {
  std::string task_id;
  Status status = Status::ok;
  std::vector<ResponseRow> rows;
  std::int64_t wall_us = 0;
  std::optional<std::string> kind;  // "compile", "protocol", ... for task-level failures
  nlohmann::json meta;              // captured output, limit notes; null when absent
  friend bool operator==(const ExecuteResponse&, const ExecuteResponse&) = default;
};

ExecuteRequest request_for(std::string task_id, const ModuleSpec& module,
                           const SequenceSheet& sheet, WireLimits limits);

// Each returns one newline-terminated line.
std::string encode_request(const ExecuteRequest& req);
std::string encode_response(const ExecuteResponse& resp);
std::string encode_ping();
std::string encode_pong();

// Throw ProtocolError on malformed input.
ExecuteRequest decode_request(std::string_view line);
// When `expected_task_id` is given a differing task_id is rejected. When
// `sheet_rows` is given the row count is checked against it.
ExecuteResponse decode_response(std::string_view line,
                                std::optional<std::string_view> expected_task_id = std::nullopt,
                                std::optional<std::size_t> sheet_rows = std::nullopt);
bool is_ping(std::string_view line);
bool is_pong(std::string_view line);

// Value model on the wire: JSON scalars and arrays as themselves, maps as
// {"map":{...}}, non-finite floats as {"float":"nan"|"inf"|"-inf"}.
nlohmann::json value_to_wire(const Value& v);
Value value_from_wire(const nlohmann::json& j);

// ---- conformance

struct ConformanceCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::string worker_command;
  std::vector<ConformanceCase> cases;
  std::size_t passed() const;
  nlohmann::json to_json() const;
};

// Runs the fixed 12-case transcript, each case against a fresh
// `<worker_command> --serve` process. Throws SpawnError when the command
// cannot be launched at all.
ConformanceReport conformance_check(const std::string& worker_command);

}  // namespace nv
