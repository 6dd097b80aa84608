#include "nv/workerproto.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include "nv/errors.hpp"
#include "nv/process.hpp"

namespace nv {

using nlohmann::json;

namespace {

std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

json parse_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw ProtocolError("message is not a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  return *it;
}

std::string string_field(const json& j, const char* key) {
  const auto& f = field(j, key);
  if (!f.is_string()) throw ProtocolError(std::string("field '") + key + "' must be a string");
  return f.get<std::string>();
}

std::int64_t int_field(const json& j, const char* key) {
  const auto& f = field(j, key);
  if (!f.is_number_integer()) throw ProtocolError(std::string("field '") + key + "' must be an integer");
  if (f.is_number_unsigned() && f.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
    throw ProtocolError(std::string("field '") + key + "' out of range");
  return f.get<std::int64_t>();
}

void check_proto(const json& j) {
  auto it = j.find("proto");
  if (it == j.end() || !it->is_string() || it->get<std::string>() != kProto)
    throw ProtocolError("missing or unsupported proto (expected nv/1)");
}

Status status_field(const json& j) {
  Status s;
  if (!parse_status(string_field(j, "status"), s))
    throw ProtocolError("unknown status '" + field(j, "status").dump() + "'");
  return s;
}

}  // namespace

nlohmann::json value_to_wire(const Value& v) {
  switch (v.storage().index()) {
    case 0: return nullptr;
    case 1: return v.as_bool();
    case 2: return v.as_int();
    case 3: {
      double d = v.as_float();
      if (std::isnan(d)) return json{{"float", "nan"}};
      if (std::isinf(d)) return json{{"float", d < 0 ? "-inf" : "inf"}};
      return d;
    }
    case 4: return v.as_string();
    case 5: {
      json arr = json::array();
      for (const auto& x : v.as_list()) arr.push_back(value_to_wire(x));
      return arr;
    }
    case 6: {
      json obj = json::object();
      for (const auto& [k, x] : v.as_map()) obj[k] = value_to_wire(x);
      return json{{"map", obj}};
    }
    default: throw ProtocolError("sentinels have no wire form");
  }
}

Value value_from_wire(const nlohmann::json& j) {
  switch (j.type()) {
    case json::value_t::null: return Null{};
    case json::value_t::boolean: return j.get<bool>();
    case json::value_t::number_integer: return j.get<std::int64_t>();
    case json::value_t::number_unsigned:
      if (j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
        throw ProtocolError("integer out of 64-bit range");
      return static_cast<std::int64_t>(j.get<std::uint64_t>());
    case json::value_t::number_float: return j.get<double>();
    case json::value_t::string: return j.get<std::string>();
    case json::value_t::array: {
      Value::List out;
      for (const auto& x : j) out.push_back(value_from_wire(x));
      return out;
    }
    case json::value_t::object: {
      if (j.size() == 1 && j.contains("map") && j["map"].is_object()) {
        Value::Map out;
        for (const auto& [k, x] : j["map"].items()) out.emplace(k, value_from_wire(x));
        return out;
      }
      if (j.size() == 1 && j.contains("float") && j["float"].is_string()) {
        auto s = j["float"].get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
      }
      throw ProtocolError("unrecognized value object " + j.dump());
    }
    default: throw ProtocolError("unsupported JSON value");
  }
}

ExecuteRequest request_for(std::string task_id, const ModuleSpec& module, const SequenceSheet& sheet,
                           WireLimits limits) {
  ExecuteRequest req{std::move(task_id), module, {}, limits};
  for (const auto& row : sheet.rows) req.sheet.push_back({row.operation, row.inputs});
  return req;
}

std::string encode_request(const ExecuteRequest& req) {
  nlohmann::ordered_json j;
  j["proto"] = kProto;
  j["type"] = "execute";
  j["task_id"] = req.task_id;
  j["module"] = {{"language", req.module.language_tag}, {"source", req.module.source}, {"entry", req.module.entry}};
  auto sheet = nlohmann::ordered_json::array();
  for (const auto& row : req.sheet) {
    auto inputs = nlohmann::ordered_json::array();
    for (const auto& cell : row.inputs) {
      if (const auto* ref = std::get_if<CellRef>(&cell)) inputs.push_back({{"ref", ref->row}});
      else inputs.push_back(nlohmann::ordered_json(value_to_wire(std::get<Value>(cell))));
    }
    sheet.push_back({{"op", row.op}, {"inputs", inputs}});
  }
  j["sheet"] = sheet;
  j["limits"] = {{"wall_ms", req.limits.wall_ms}, {"mem_mb", req.limits.mem_mb}};
  return dump_line(j);
}

ExecuteRequest decode_request(std::string_view line) {
  json j = parse_line(line);
  check_proto(j);
  if (string_field(j, "type") != "execute") throw ProtocolError("expected an execute message");
  ExecuteRequest req;
  req.task_id = string_field(j, "task_id");
  const auto& m = field(j, "module");
  if (!m.is_object()) throw ProtocolError("module must be an object");
  req.module = {string_field(m, "language"), string_field(m, "source"), string_field(m, "entry")};
  const auto& sheet = field(j, "sheet");
  if (!sheet.is_array()) throw ProtocolError("sheet must be an array");
  int index = 0;
  for (const auto& r : sheet) {
    ++index;
    if (!r.is_object()) throw ProtocolError("sheet row must be an object");
    RequestRow row;
    row.op = string_field(r, "op");
    const auto& inputs = field(r, "inputs");
    if (!inputs.is_array()) throw ProtocolError("inputs must be an array");
    for (const auto& in : inputs) {
      if (in.is_object() && in.size() == 1 && in.contains("ref")) {
        auto k = int_field(in, "ref");
        if (k < 1 || k >= index) throw ProtocolError("ref " + std::to_string(k) + " does not name an earlier row");
        row.inputs.emplace_back(CellRef{static_cast<int>(k)});
      } else {
        row.inputs.emplace_back(value_from_wire(in));
      }
    }
    req.sheet.push_back(std::move(row));
  }
  if (auto it = j.find("limits"); it != j.end()) {
    if (!it->is_object()) throw ProtocolError("limits must be an object");
    if (it->contains("wall_ms")) req.limits.wall_ms = int_field(*it, "wall_ms");
    if (it->contains("mem_mb")) req.limits.mem_mb = int_field(*it, "mem_mb");
  }
  if (req.limits.wall_ms < 1) throw ProtocolError("wall_ms must be at least 1");
  if (req.limits.mem_mb < 1) throw ProtocolError("mem_mb must be at least 1");
  return req;
}

std::string encode_response(const ExecuteResponse& resp) {
  nlohmann::ordered_json j;
  j["proto"] = kProto;
  j["type"] = "result";
  j["task_id"] = resp.task_id;
  j["status"] = to_string(resp.status);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : resp.rows) {
    nlohmann::ordered_json row;
    row["status"] = to_string(r.status);
    if (r.value) row["value"] = nlohmann::ordered_json(value_to_wire(*r.value));
    if (r.message) row["message"] = *r.message;
    row["wall_us"] = r.wall_us;
    rows.push_back(std::move(row));
  }
  j["rows"] = rows;
  j["wall_us"] = resp.wall_us;
  if (resp.kind) j["kind"] = *resp.kind;
  if (!resp.meta.is_null()) j["meta"] = nlohmann::ordered_json(resp.meta);
  return dump_line(j);
}

ExecuteResponse decode_response(std::string_view line, std::optional<std::string_view> expected_task_id,
                                std::optional<std::size_t> sheet_rows) {
  json j = parse_line(line);
  check_proto(j);
  if (string_field(j, "type") != "result") throw ProtocolError("expected a result message");
  ExecuteResponse resp;
  resp.task_id = string_field(j, "task_id");
  if (expected_task_id && resp.task_id != *expected_task_id)
    throw ProtocolError("task_id mismatch: expected '" + std::string(*expected_task_id) + "', got '" +
                        resp.task_id + "'");
  resp.status = status_field(j);
  const auto& rows = field(j, "rows");
  if (!rows.is_array()) throw ProtocolError("rows must be an array");
  bool terminated = false;
  for (const auto& r : rows) {
    if (terminated) throw ProtocolError("rows continue after a non-ok row");
    if (!r.is_object()) throw ProtocolError("row must be an object");
    ResponseRow row;
    row.status = status_field(r);
    if (auto it = r.find("value"); it != r.end()) row.value = value_from_wire(*it);
    if (auto it = r.find("message"); it != r.end()) {
      if (!it->is_string()) throw ProtocolError("row message must be a string");
      row.message = it->get<std::string>();
    }
    row.wall_us = int_field(r, "wall_us");
    if (row.wall_us < 0) throw ProtocolError("negative wall_us");
    if (row.status == Status::ok && !row.value) throw ProtocolError("ok row without a value");
    if (row.status != Status::ok) {
      terminated = true;
      if (row.status != resp.status) throw ProtocolError("row status disagrees with task status");
    }
    resp.rows.push_back(std::move(row));
  }
  if (sheet_rows && resp.rows.size() > *sheet_rows)
    throw ProtocolError("response has more rows than the request sheet");
  if (resp.status == Status::ok && sheet_rows && resp.rows.size() != *sheet_rows)
    throw ProtocolError("ok response is missing rows");
  if (resp.status == Status::ok && terminated) throw ProtocolError("ok task with a failed row");
  resp.wall_us = int_field(j, "wall_us");
  if (resp.wall_us < 0) throw ProtocolError("negative wall_us");
  if (auto it = j.find("kind"); it != j.end()) {
    if (!it->is_string()) throw ProtocolError("kind must be a string");
    resp.kind = it->get<std::string>();
  }
  if (auto it = j.find("meta"); it != j.end()) resp.meta = *it;
  return resp;
}

std::string encode_ping() { return dump_line({{"proto", kProto}, {"type", "ping"}}); }
std::string encode_pong() { return dump_line({{"proto", kProto}, {"type", "pong"}}); }

bool is_ping(std::string_view line) {
  try {
    auto j = parse_line(line);
    return j.value("type", "") == "ping";
  } catch (const ProtocolError&) {
    return false;
  }
}

bool is_pong(std::string_view line) {
  try {
    auto j = parse_line(line);
    return j.value("type", "") == "pong";
  } catch (const ProtocolError&) {
    return false;
  }
}

// ---------------------------------------------------------------------------
// Conformance

std::size_t ConformanceReport::passed() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.passed;
  return n;
}

nlohmann::json ConformanceReport::to_json() const {
  json cs = json::array();
  for (const auto& c : cases) cs.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"worker", worker_command}, {"passed", passed()}, {"total", cases.size()}, {"cases", cs}};
}

namespace {

struct CaseSpec {
  std::string name;
  std::string source;
  std::string entry;
  std::vector<RequestRow> rows;
  WireLimits limits;
  // Returns an empty string on pass, otherwise the reason.
  std::function<std::string(const std::optional<ExecuteResponse>&, ChildProcess::Read, std::chrono::milliseconds)>
      judge;
};

RequestRow row(std::string op, std::vector<Cell> inputs) { return {std::move(op), std::move(inputs)}; }

std::string expect_values(const std::optional<ExecuteResponse>& resp, const std::vector<Value>& values) {
  if (!resp) return "no response";
  if (resp->status != Status::ok) return "status " + std::string(to_string(resp->status));
  if (resp->rows.size() != values.size()) return "expected " + std::to_string(values.size()) + " rows";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto got = canonical_encode(*resp->rows[i].value);
    const auto want = canonical_encode(values[i]);
    if (got != want) return "row " + std::to_string(i + 1) + ": got " + got + ", expected " + want;
  }
  return "";
}

std::vector<CaseSpec> conformance_cases() {
  using R = ChildProcess::Read;
  using ms = std::chrono::milliseconds;
  const std::string gcd = "def gcd(a, b):\n    while b:\n        a, b = b, a % b\n    return abs(a)\n";
  std::vector<CaseSpec> cases;
  auto values_case = [&](std::string name, std::string src, std::string entry, std::vector<RequestRow> rows,
                         std::vector<Value> want) {
    CaseSpec c{std::move(name), std::move(src), std::move(entry), std::move(rows), {}, nullptr};
    c.judge = [want](const std::optional<ExecuteResponse>& r, R, ms) { return expect_values(r, want); };
    cases.push_back(std::move(c));
  };
  values_case("int", gcd, "gcd", {row("gcd", {Value(3), Value(7)})}, {Value(1)});
  values_case("ref_chain", gcd, "gcd",
              {row("gcd", {Value(12), Value(18)}), row("gcd", {CellRef{1}, Value(4)})}, {Value(6), Value(2)});
  {
    CaseSpec c{"error_termination", "def f(a):\n    return 10 // a\n", "f",
               {row("f", {Value(0)}), row("f", {Value(1)})}, {}, nullptr};
    c.judge = [](const std::optional<ExecuteResponse>& r, R, ms) -> std::string {
      if (!r) return "no response";
      if (r->status != Status::error) return "status " + std::string(to_string(r->status));
      if (r->rows.size() != 1) return "expected exactly 1 row, got " + std::to_string(r->rows.size());
      if (r->rows[0].status != Status::error) return "row 1 is not an error";
      return "";
    };
    cases.push_back(std::move(c));
  }
  {
    CaseSpec c{"timeout", "def f():\n    while True:\n        pass\n", "f", {row("f", {})}, {200, 256}, nullptr};
    c.judge = [](const std::optional<ExecuteResponse>& r, R, ms elapsed) -> std::string {
      if (!r) return "no response within 2*wall_ms";
      if (r->status != Status::timeout) return "status " + std::string(to_string(r->status));
      if (elapsed > ms(400)) return "reply took " + std::to_string(elapsed.count()) + " ms";
      return "";
    };
    cases.push_back(std::move(c));
  }
  {
    CaseSpec c{"crash", "import os\n\ndef f():\n    os._exit(7)\n", "f", {row("f", {})}, {}, nullptr};
    c.judge = [](const std::optional<ExecuteResponse>& r, R read, ms) -> std::string {
      if (r && r->status == Status::crash) return "";
      if (!r && read == R::eof) return "";
      return r ? "status " + std::string(to_string(r->status)) : "worker neither exited nor replied";
    };
    cases.push_back(std::move(c));
  }
  {
    CaseSpec c{"memory_bomb", "def f():\n    x = 'a' * (1 << 30)\n    return len(x)\n", "f", {row("f", {})},
               {2000, 64}, nullptr};
    c.judge = [](const std::optional<ExecuteResponse>& r, R read, ms) -> std::string {
      if (r && (r->status == Status::error || r->status == Status::crash)) return "";
      if (!r && read == R::eof) return "";
      return r ? "status " + std::string(to_string(r->status)) : "no reply";
    };
    cases.push_back(std::move(c));
  }
  values_case("float", "def f(a, b):\n    return a + b\n", "f", {row("f", {Value(0.1), Value(0.2)})},
              {Value(0.30000000000000004)});
  values_case("string", "def f(s):\n    return s + '!'\n", "f", {row("f", {Value("\xc3\xa9,\"q\"\n")})},
              {Value("\xc3\xa9,\"q\"\n!")});
  values_case("bool", "def f(a):\n    return a > 2\n", "f", {row("f", {Value(3)}), row("f", {Value(1)})},
              {Value(true), Value(false)});
  values_case("list", "def f(xs):\n    return sorted(xs) + [[1, 2]]\n", "f",
              {row("f", {Value(Value::List{Value(3), Value(1), Value(2)})})},
              {Value(Value::List{Value(1), Value(2), Value(3), Value(Value::List{Value(1), Value(2)})})});
  values_case("map",
              "def f(d):\n    out = {}\n    for k in d:\n        out[k] = d[k] * 2\n    return out\n", "f",
              {row("f", {Value(Value::Map{{"a", Value(1)}, {"b", Value(2)}})})},
              {Value(Value::Map{{"a", Value(2)}, {"b", Value(4)}})});
  values_case("null", "def f(x):\n    return None\n", "f", {row("f", {Value(Null{})})}, {Value(Null{})});
  return cases;
}

}  // namespace

ConformanceReport conformance_check(const std::string& worker_command) {
  ConformanceReport report;
  report.worker_command = worker_command;
  auto argv = split_command(worker_command);
  if (argv.empty()) throw SpawnError("empty worker command");
  argv.emplace_back("--serve");
  // A launch failure is a property of the command, not of any case.
  { ChildProcess::spawn(argv, {}); }

  int serial = 0;
  for (const auto& spec : conformance_cases()) {
    ConformanceCase result{spec.name, false, ""};
    try {
      auto proc = ChildProcess::spawn(argv, {});
      std::string line;
      proc->write_all(encode_ping());
      auto read = proc->read_line(line, std::chrono::steady_clock::now() + std::chrono::milliseconds(2000));
      if (read != ChildProcess::Read::line || !is_pong(line)) {
        result.detail = "no pong within 2000 ms";
        report.cases.push_back(result);
        continue;
      }
      ExecuteRequest req{"conf-" + std::to_string(++serial) + "-" + spec.name,
                         {"python", spec.source, spec.entry},
                         spec.rows,
                         spec.limits};
      auto start = std::chrono::steady_clock::now();
      proc->write_all(encode_request(req));
      auto deadline = start + std::chrono::milliseconds(2 * spec.limits.wall_ms);
      read = proc->read_line(line, deadline);
      auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      std::optional<ExecuteResponse> resp;
      if (read == ChildProcess::Read::line) resp = decode_response(line, req.task_id, req.sheet.size());
      result.detail = spec.judge(resp, read, elapsed);
      result.passed = result.detail.empty();
      proc->kill();
    } catch (const ProtocolError& e) {
      result.detail = std::string("protocol error: ") + e.what();
    } catch (const SpawnError& e) {
      result.detail = std::string("spawn error: ") + e.what();
    }
    report.cases.push_back(result);
  }
  return report;
}

}  // namespace nv
