#include <random>

#include "doctest.h"
#include "nv/errors.hpp"
#include "nv/workerproto.hpp"

using namespace nv;

namespace {

Value random_value(std::mt19937_64& rng, int depth = 0) {
  switch (rng() % (depth < 2 ? 8 : 6)) {
    case 0: return Value(Null{});
    case 1: return Value(rng() % 2 == 0);
    case 2: return Value(static_cast<std::int64_t>(rng()));
    case 3: {
      const double specials[] = {0.1, -0.0, 1e300, 5e-324, NAN, INFINITY, -INFINITY, 2.5};
      return Value(specials[rng() % 8]);
    }
    case 4: return Value(std::string("line\nbreak \"q\" \xc3\xa9 ") + std::to_string(rng() % 100));
    case 5: return Value(std::string("{\"map\":1}"));
    case 6: {
      Value::List l;
      for (std::size_t i = 0; i < rng() % 4; ++i) l.push_back(random_value(rng, depth + 1));
      return Value(l);
    }
    default: {
      Value::Map m;
      for (std::size_t i = 0; i < rng() % 4; ++i) m["k" + std::to_string(i)] = random_value(rng, depth + 1);
      m["map"] = Value(1);
      return Value(m);
    }
  }
}

}  // namespace

TEST_CASE("gcd request encodes inputs literally") {
  SequenceSheet s{"p1", parse_signature("gcd(int,int)->int"), {{1, "gcd", {Value(3), Value(7)}}}, {}};
  auto line = encode_request(request_for("task-1", {"python", "src", "gcd"}, s, {}));
  CHECK(line.find("\"inputs\":[3,7]") != std::string::npos);
  CHECK(line.find("\"proto\":\"nv/1\"") != std::string::npos);
  CHECK(line.back() == '\n');
  CHECK(line.find('\n') == line.size() - 1);
}

TEST_CASE("codec round trip for generated messages") {
  std::mt19937_64 rng(5);
  for (int iter = 0; iter < 300; ++iter) {
    ExecuteRequest req;
    req.task_id = "t" + std::to_string(iter) + "\n\"x\"";
    req.module = {"python", "def f(x):\n    return x\n", "f"};
    req.limits = {static_cast<std::int64_t>(1 + rng() % 5000), static_cast<std::int64_t>(1 + rng() % 512)};
    int rows = 1 + static_cast<int>(rng() % 4);
    for (int r = 1; r <= rows; ++r) {
      RequestRow row{"f", {}};
      for (std::size_t i = 0; i < rng() % 3; ++i) {
        if (r > 1 && rng() % 3 == 0) row.inputs.emplace_back(CellRef{1 + static_cast<int>(rng() % (r - 1))});
        else row.inputs.emplace_back(random_value(rng));
      }
      req.sheet.push_back(row);
    }
    auto line = encode_request(req);
    CHECK(line.find('\n') == line.size() - 1);
    CHECK(decode_request(line) == req);

    ExecuteResponse resp;
    resp.task_id = req.task_id;
    resp.wall_us = static_cast<std::int64_t>(rng() % 100000);
    std::size_t n = rng() % (req.sheet.size() + 1);
    for (std::size_t i = 0; i < n; ++i) resp.rows.push_back({Status::ok, random_value(rng), std::nullopt, 5});
    const Status fails[] = {Status::error, Status::timeout, Status::crash};
    if (n < req.sheet.size()) {
      Status st = fails[rng() % 3];
      resp.rows.push_back({st, std::nullopt, std::string("boom\nline"), 7});
      resp.status = st;
    } else {
      resp.status = Status::ok;
    }
    if (rng() % 2) resp.meta = {{"stdout", "x\ny"}};
    auto rline = encode_response(resp);
    CHECK(rline.find('\n') == rline.size() - 1);
    auto back = decode_response(rline, req.task_id, req.sheet.size());
    // NaN != NaN under operator== on doubles inside Value is handled by Value's own equality.
    CHECK(back == resp);
  }
}

TEST_CASE("decode rejects protocol violations") {
  const std::string ok =
      R"({"proto":"nv/1","type":"result","task_id":"a","status":"ok","rows":[{"status":"ok","value":1,"wall_us":3}],"wall_us":4})";
  CHECK_NOTHROW(decode_response(ok, "a", 1));
  CHECK_THROWS_AS(decode_response(ok, "b", 1), ProtocolError);
  CHECK_THROWS_AS(decode_response("{not json", "a"), ProtocolError);
  CHECK_THROWS_AS(decode_response(
                      R"({"proto":"nv/1","type":"result","task_id":"a","status":"weird","rows":[],"wall_us":4})"),
                  ProtocolError);
  // Rows after the first failure.
  CHECK_THROWS_AS(
      decode_response(
          R"({"proto":"nv/1","type":"result","task_id":"a","status":"error","rows":[{"status":"error","wall_us":1},{"status":"ok","value":1,"wall_us":1}],"wall_us":4})"),
      ProtocolError);
  // More rows than requested.
  CHECK_THROWS_AS(decode_response(ok, "a", 0), ProtocolError);
  // Missing field.
  CHECK_THROWS_AS(decode_response(R"({"proto":"nv/1","type":"result","task_id":"a","status":"ok","rows":[]})"),
                  ProtocolError);
  // Error termination: a 2-row sheet where row 1 raised.
  auto r = decode_response(
      R"({"proto":"nv/1","type":"result","task_id":"a","status":"error","rows":[{"status":"error","message":"ZeroDivisionError","wall_us":1}],"wall_us":4})",
      "a", 2);
  CHECK(r.rows.size() == 1);
  CHECK(r.status == Status::error);
}

TEST_CASE("wire value model keeps maps and non-finite floats apart") {
  CHECK(value_to_wire(Value(Value::Map{{"a", Value(1)}})).dump() == R"({"map":{"a":1}})");
  CHECK(value_to_wire(Value(INFINITY)).dump() == R"({"float":"inf"})");
  CHECK(value_from_wire(nlohmann::json::parse("1.0")).is_float());
  CHECK(value_from_wire(nlohmann::json::parse("1")).is_int());
  CHECK_THROWS_AS(value_from_wire(nlohmann::json::parse(R"({"a":1})")), ProtocolError);
  CHECK_THROWS_AS(value_from_wire(nlohmann::json::parse("18446744073709551615")), ProtocolError);
}

TEST_CASE("ping and pong") {
  CHECK(is_ping(encode_ping()));
  CHECK(is_pong(encode_pong()));
  CHECK_FALSE(is_pong(encode_ping()));
}

TEST_CASE("conformance: built-in stub worker passes all cases") {
  auto report = conformance_check(NV_STUBWORKER_PATH);
  for (const auto& c : report.cases) {
    const std::string what = c.name + ": " + c.detail;
    CHECK_MESSAGE(c.passed, what);
  }
  CHECK(report.cases.size() == 12);
  CHECK(report.passed() == 12);
}

TEST_CASE("conformance: silent worker fails the cases and reports no pong") {
  auto report = conformance_check("sleep 30");
  CHECK(report.cases.size() == 12);
  CHECK(report.passed() == 0);
  CHECK(report.cases[0].detail.find("pong") != std::string::npos);
}

TEST_CASE("conformance: wrong task_id is surfaced as a protocol error") {
  // Answers ping, then echoes a fixed task id for every request.
  const std::string script = std::string(NV_TEST_DATA_DIR) + "/wrong_id_worker.sh";
  auto report = conformance_check("sh " + script);
  REQUIRE(report.cases.size() == 12);
  CHECK(report.cases[0].detail.find("task_id") != std::string::npos);
  CHECK_FALSE(report.cases[0].passed);
}

TEST_CASE("conformance: unlaunchable command is a spawn error") {
  CHECK_THROWS_AS(conformance_check("/nonexistent/worker"), SpawnError);
}
