#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "httplib.h"
#include "nv/arena.hpp"
#include "nv/errors.hpp"
#include "nv/providers.hpp"

using namespace nv;

namespace {

GenerationRequest gcd_request(int n, std::uint64_t seed, GenerationKind kind = GenerationKind::versions) {
  GenerationRequest r;
  r.prompt_text = fixtures::kGcdPrompt;
  r.kind = kind;
  r.n = n;
  r.seed = seed;
  return r;
}

// Counts versions that agree with std::gcd on a grid including negatives.
std::size_t count_correct(const std::vector<std::string>& sources) {
  std::vector<SequenceSheet> tests;
  for (std::int64_t a = -12; a <= 12; a += 3)
    for (std::int64_t b = -10; b <= 10; b += 4)
      tests.push_back(fixtures::gcd_sheet("t" + std::to_string(tests.size()), a, b));
  std::vector<ModuleVersion> versions;
  for (const auto& s : sources) versions.push_back(fixtures::version(s.c_str()));
  ArenaConfig cfg;
  cfg.wall_ms = 500;
  auto srm = execute(build_sm("gcd", fixtures::gcd_signature(), tests, versions), cfg);
  std::size_t correct = 0;
  for (std::size_t v = 0; v < srm.version_count(); ++v) {
    bool ok = true;
    for (std::size_t t = 0; t < tests.size(); ++t) {
      auto a = std::get<Value>(tests[t].rows[0].inputs[0]).as_int();
      auto b = std::get<Value>(tests[t].rows[0].inputs[1]).as_int();
      ok = ok && srm.cell(t, v).row_outputs == std::vector<Value>{Value(std::gcd(a, b))};
    }
    correct += ok;
  }
  return correct;
}

struct LocalServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server.Post("/v1/chat/completions", [this, handler](const httplib::Request& q, httplib::Response& r) {
      ++hits;
      handler(q, r);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions"; }
};

std::string completion(const std::vector<std::string>& contents) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array();
  for (const auto& c : contents) j["choices"].push_back({{"message", {{"role", "assistant"}, {"content", c}}}});
  return j.dump();
}

std::filesystem::path temp_file(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nv_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST_CASE("mock provider: gcd n=6 seed=42 gives 2 correct and 4 faulty versions") {
  MockProvider mock;
  auto r = generate(gcd_request(6, 42), mock);
  REQUIRE(r.items.size() == 6);
  CHECK(count_correct(r.items) == 2);
  CHECK(dedup_normalize(r.items).size() == 6);
  CHECK(r.provider_id == "mock");
}

TEST_CASE("mock provider is deterministic and seed-sensitive") {
  MockProvider mock;
  auto a = generate(gcd_request(6, 42), mock);
  auto b = generate(gcd_request(6, 42), mock);
  CHECK(a.items == b.items);
  bool differs = false;
  for (std::uint64_t s = 1; s < 6 && !differs; ++s) differs = generate(gcd_request(6, s), mock).items != a.items;
  CHECK(differs);
  CHECK(generate(gcd_request(1, 42), mock).items.size() == 1);
  // Larger n draws on mutation operators.
  auto big = generate(gcd_request(12, 7), mock);
  CHECK(big.items.size() == 12);
  CHECK(count_correct(big.items) >= 1);
}

TEST_CASE("mock provider tests parse against the prompt signature") {
  MockProvider mock;
  auto r = generate(gcd_request(5, 42, GenerationKind::tests), mock);
  CHECK(r.items.size() == 5);
  auto parsed = parse_generated_tests(r.items, fixtures::gcd_signature());
  CHECK(parsed.rejected.empty());
  CHECK(parsed.sheets.size() == 5);
  CHECK(parsed.sheets[0].sheet_id == "g1");
  CHECK(generate(gcd_request(5, 42, GenerationKind::tests), mock).items == r.items);
}

TEST_CASE("mock provider refuses unknown functions and bad requests") {
  MockProvider mock;
  GenerationRequest r = gcd_request(3, 1);
  r.prompt_text = "def mystery(x: int) -> int:\n    pass\n";
  CHECK_THROWS_AS(generate(r, mock), ProviderUnavailableError);
  CHECK_THROWS_AS(generate(gcd_request(0, 1), mock), UsageError);
}

TEST_CASE("generated test items are parsed or rejected one by one") {
  std::vector<std::string> items = {"sheet a gcd(int,int)->int\n1,gcd,1,2\n", "def test_gcd(): assert gcd(1, 2) == 1\n",
                                    "sheet b gcd(int)->int\n1,gcd,1\n", "sheet c gcd(int,int)->int\n1,gcd,4,A1\n",
                                    "sheet d gcd(int,int)->int\n1,gcd,8,12\n2,gcd,A1,3\n"};
  auto parsed = parse_generated_tests(items, fixtures::gcd_signature());
  CHECK(parsed.sheets.size() == 2);
  CHECK(parsed.sheets[1].sheet_id == "g2");
  REQUIRE(parsed.rejected.size() == 3);
  CHECK(parsed.rejected[0].rfind("item 2:", 0) == 0);
  CHECK(parsed.rejected[1].rfind("item 3:", 0) == 0);
  CHECK(parsed.rejected[2].rfind("item 4:", 0) == 0);
}

TEST_CASE("dedup_normalize") {
  CHECK(dedup_normalize({}).empty());
  auto one = dedup_normalize({"def f():\n    return 1   \n", "def f():\r\n    return 1\r\n\n\n"});
  CHECK(one.size() == 1);
  auto two = dedup_normalize({"def f():\n    return 1\n", "def f():\n    return 1  # one\n"});
  CHECK(two.size() == 2);
  auto order = dedup_normalize({"b\n", "a\n", "b \n"});
  CHECK(order == std::vector<std::string>{"b\n", "a\n"});
}

TEST_CASE("mutation operators") {
  const std::string src = "def f(a, b):\n    if a > b:\n        return a % 3\n    return b\n";
  CHECK(*mutate(src, MutationOp::operator_swap, 0) == "def f(a, b):\n    if a >= b:\n        return a % 3\n    return b\n");
  CHECK(*mutate(src, MutationOp::operator_swap, 1) == "def f(a, b):\n    if a > b:\n        return a // 3\n    return b\n");
  CHECK(*mutate(src, MutationOp::boundary_shift) == "def f(a, b):\n    if a > b:\n        return a % 4\n    return b\n");
  CHECK(*mutate(src, MutationOp::branch_negation) ==
        "def f(a, b):\n    if not (a > b):\n        return a % 3\n    return b\n");
  CHECK_FALSE(mutate("def f(x2):\n    return x2\n", MutationOp::boundary_shift));
}

TEST_CASE("code block extraction") {
  CHECK(extract_code_blocks("Here:\n```python\ndef f():\n    return 1\n```\nand\n```\nx\n```") ==
        std::vector<std::string>{"def f():\n    return 1\n", "x\n"});
  CHECK(extract_code_blocks("def f():\n    return 2\n") == std::vector<std::string>{"def f():\n    return 2\n"});
}

TEST_CASE("http provider against a local server, with record and replay") {
  std::string seen_auth, seen_body;
  std::mutex m;
  LocalServer srv([&](const httplib::Request& q, httplib::Response& r) {
    {
      std::lock_guard lock(m);
      seen_auth = q.get_header_value("Authorization");
      seen_body = q.body;
    }
    auto n = nlohmann::json::parse(q.body)["n"].get<int>();
    std::vector<std::string> contents(static_cast<std::size_t>(n),
                                      "```python\n" + std::string(fixtures::kEuclid) + "```");
    r.set_content(completion(contents), "application/json");
  });
  auto transcript = temp_file("transcript.jsonl");
  HttpProviderConfig cfg;
  cfg.url = srv.url();
  cfg.token = "secret";
  cfg.model = "stub-model";
  cfg.record_path = transcript;
  HttpProvider live(cfg);
  auto req = gcd_request(3, 1);
  auto r = generate(req, live);
  // Three identical completions collapse to one item.
  CHECK(r.items.size() == 1);
  CHECK(r.items[0] == fixtures::kEuclid);
  CHECK(seen_auth == "Bearer secret");
  auto body = nlohmann::json::parse(seen_body);
  CHECK(body["model"] == "stub-model");
  CHECK(body["n"] == 3);
  CHECK(body.contains("messages"));
  CHECK(body.contains("temperature"));
  CHECK(body.contains("max_tokens"));
  CHECK(body["messages"][0]["content"].get<std::string>().find("gcd(a: int, b: int)") != std::string::npos);

  const int hits = srv.hits;
  HttpProviderConfig replay_cfg;
  replay_cfg.model = "stub-model";
  replay_cfg.replay_path = transcript;
  HttpProvider replay(replay_cfg);
  auto again = generate(req, replay);
  CHECK(again.items == r.items);
  CHECK(srv.hits == hits);
  std::filesystem::remove(transcript);
}

TEST_CASE("http provider: concurrent batches keep request order") {
  LocalServer srv([&](const httplib::Request& q, httplib::Response& r) {
    auto body = nlohmann::json::parse(q.body);
    // Later batches answer sooner to shake up completion order.
    std::this_thread::sleep_for(std::chrono::milliseconds(10 * (4 - srv.hits.load() % 4)));
    std::string marker = std::to_string(body["n"].get<int>());
    r.set_content(completion({"```\ndef gcd(a, b):\n    return " + marker + "\n```"}), "application/json");
  });
  HttpProviderConfig cfg;
  cfg.url = srv.url();
  cfg.model = "m";
  cfg.per_request_n = 2;
  cfg.concurrency = 3;
  HttpProvider p(cfg);
  auto r = p.fetch(gcd_request(5, 0));
  REQUIRE(r.items.size() == 3);
  CHECK(r.items[0].find("return 2") != std::string::npos);
  CHECK(r.items[1].find("return 2") != std::string::npos);
  CHECK(r.items[2].find("return 1") != std::string::npos);
  CHECK(p.request_bodies(gcd_request(5, 0)).size() == 3);
}

TEST_CASE("http provider error mapping") {
  LocalServer quota([](const httplib::Request&, httplib::Response& r) { r.status = 429; });
  HttpProviderConfig cfg;
  cfg.url = quota.url();
  cfg.model = "m";
  HttpProvider q(cfg);
  CHECK_THROWS_AS(generate(gcd_request(1, 0), q), QuotaError);

  LocalServer empty([](const httplib::Request&, httplib::Response& r) {
    r.set_content(completion({"   \n"}), "application/json");
  });
  cfg.url = empty.url();
  HttpProvider e(cfg);
  CHECK_THROWS_AS(generate(gcd_request(1, 0), e), EmptyGenerationError);

  LocalServer broken([](const httplib::Request&, httplib::Response& r) { r.status = 500; });
  cfg.url = broken.url();
  HttpProvider b(cfg);
  CHECK_THROWS_AS(generate(gcd_request(1, 0), b), ProviderUnavailableError);

  cfg.url = "http://127.0.0.1:1/v1/chat/completions";
  cfg.timeout_ms = 2000;
  HttpProvider down(cfg);
  CHECK_THROWS_AS(generate(gcd_request(1, 0), down), ProviderUnavailableError);

  HttpProviderConfig none;
  CHECK_THROWS_AS(HttpProvider{none}, ProviderUnavailableError);
  none.replay_path = "/nonexistent/transcript.jsonl";
  try {
    HttpProvider missing(none);
    FAIL("expected an error");
  } catch (const ProviderUnavailableError& err) {
    CHECK(std::string(err.what()).find("/nonexistent/transcript.jsonl") != std::string::npos);
  }
}

TEST_CASE("http provider replays a transcript with identical completions") {
  auto path = temp_file("identical.jsonl");
  HttpProviderConfig cfg;
  cfg.model = "m";
  cfg.replay_path = path;
  {
    HttpProviderConfig shape = cfg;
    shape.replay_path.reset();
    shape.url = "http://unused";
    auto body = HttpProvider(shape).request_bodies(gcd_request(3, 0))[0];
    nlohmann::json response = {{"status", 200}, {"body", nlohmann::json::parse(completion({"```python\ndef gcd(a, b):\n    return 1\n```", "```python\ndef gcd(a, b):\n    return 1\n```", "```python\ndef gcd(a, b):\n    return 1   \n```"}))}};
    std::ofstream(path) << nlohmann::json{{"request", body}, {"response", response}}.dump() << "\n";
  }
  HttpProvider p(cfg);
  auto r = generate(gcd_request(3, 0), p);
  CHECK(r.items.size() == 1);
  CHECK(r.raw_metadata["duplicates_removed"] == 2);
  // The transcript entry is consumed; a second identical request has no answer.
  CHECK_THROWS_AS(generate(gcd_request(3, 0), p), ProviderUnavailableError);
  std::filesystem::remove(path);
}

TEST_CASE("provider settings from the environment") {
  ::setenv("NV_PROVIDER_URL", "http://example.invalid/x", 1);
  ::setenv("NV_PROVIDER_MODEL", "env-model", 1);
  auto cfg = http_config_from_env();
  CHECK(cfg.url == "http://example.invalid/x");
  CHECK(cfg.model == "env-model");
  ::unsetenv("NV_PROVIDER_URL");
  ::unsetenv("NV_PROVIDER_MODEL");
}
