#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>

#include "httplib.h"
#include "nv/errors.hpp"
#include "nv/providers.hpp"

namespace nv {

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
    text.replace(pos, key.size(), value);
  return text;
}

nlohmann::json transcript_entry(const nlohmann::json& request, int status, const std::string& body) {
  nlohmann::json response = {{"status", status}};
  auto parsed = nlohmann::json::parse(body, nullptr, false);
  if (parsed.is_discarded()) response["text"] = body;
  else response["body"] = parsed;
  return {{"request", request}, {"response", response}};
}

std::vector<std::string> items_from_response(const nlohmann::json& response, const std::string& where) {
  const int status = response.value("status", 0);
  if (status == 429) throw QuotaError(where + ": quota exceeded (HTTP 429)");
  if (status != 200) throw ProviderUnavailableError(where + ": HTTP " + std::to_string(status));
  if (!response.contains("body")) throw ProviderUnavailableError(where + ": response body is not JSON");
  std::vector<std::string> items;
  try {
    for (const auto& choice : response["body"].at("choices")) {
      const auto& content = choice.at("message").at("content");
      if (!content.is_string()) continue;
      for (auto& block : extract_code_blocks(content.get<std::string>())) items.push_back(std::move(block));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderUnavailableError(where + ": unexpected response shape (" + e.what() + ")");
  }
  return items;
}

}  // namespace

struct HttpProvider::Replay {
  std::filesystem::path path;
  std::vector<nlohmann::json> entries;
  std::vector<bool> used;
  std::mutex mutex;

  nlohmann::json take(const nlohmann::json& request) {
    std::lock_guard lock(mutex);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!used[i] && entries[i].at("request") == request) {
        used[i] = true;
        return entries[i].at("response");
      }
    }
    throw ProviderUnavailableError("transcript " + path.string() + " has no entry for this request");
  }
};

HttpProviderConfig http_config_from_env(HttpProviderConfig base) {
  if (const char* v = std::getenv("NV_PROVIDER_URL")) base.url = v;
  if (const char* v = std::getenv("NV_PROVIDER_TOKEN")) base.token = v;
  if (const char* v = std::getenv("NV_PROVIDER_MODEL")) base.model = v;
  return base;
}

HttpProvider::HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.concurrency < 1) throw UsageError("provider concurrency must be at least 1");
  if (cfg_.replay_path) {
    std::ifstream in(*cfg_.replay_path);
    if (!in) throw ProviderUnavailableError("cannot open provider transcript " + cfg_.replay_path->string());
    replay_ = std::make_unique<Replay>();
    replay_->path = *cfg_.replay_path;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("request") || !j.contains("response"))
        throw ProviderUnavailableError("transcript " + cfg_.replay_path->string() + " line " +
                                       std::to_string(lineno) + " is not a {request, response} record");
      replay_->entries.push_back(std::move(j));
    }
    replay_->used.assign(replay_->entries.size(), false);
  } else if (cfg_.url.empty()) {
    throw ProviderUnavailableError("no provider URL configured (set NV_PROVIDER_URL)");
  }
}

HttpProvider::~HttpProvider() = default;

std::vector<nlohmann::json> HttpProvider::request_bodies(const GenerationRequest& req) const {
  std::string signature;
  try {
    signature = render_signature(sheets_from_prompt(req.prompt_text).signature);
  } catch (const Error&) {
  }
  const auto& tmpl = req.kind == GenerationKind::versions ? cfg_.versions_template : cfg_.tests_template;
  auto content = substitute(substitute(tmpl, "{prompt}", req.prompt_text), "{signature}", signature);
  const int per = cfg_.per_request_n > 0 ? cfg_.per_request_n : req.n;
  std::vector<nlohmann::json> bodies;
  for (int remaining = req.n; remaining > 0; remaining -= per) {
    nlohmann::json body;
    body["model"] = cfg_.model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", content}}});
    body["n"] = std::min(per, remaining);
    body["temperature"] = req.sampling.temperature;
    body["max_tokens"] = req.sampling.max_tokens;
    bodies.push_back(std::move(body));
  }
  return bodies;
}

ProviderResult HttpProvider::fetch(const GenerationRequest& req) {
  validate_request(req);
  const auto bodies = request_bodies(req);
  std::vector<nlohmann::json> responses(bodies.size());
  std::vector<std::exception_ptr> errors(bodies.size());

  std::string base, path = "/";
  if (!replay_) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(cfg_.url, m, url_re))
      throw ProviderUnavailableError("provider URL '" + cfg_.url + "' is not an http(s) URL");
    base = m[1].str();
    if (m[2].matched) path = m[2].str();
  }

  auto one = [&](std::size_t i) {
    const std::string where = "provider request " + std::to_string(i + 1);
    if (replay_) {
      responses[i] = replay_->take(bodies[i]);
      return;
    }
    httplib::Client client(base);
    if (!client.is_valid()) throw ProviderUnavailableError("cannot use provider URL '" + cfg_.url + "'");
    client.set_connection_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(cfg_.timeout_ms));
    if (!cfg_.token.empty()) client.set_bearer_token_auth(cfg_.token);
    auto res = client.Post(path, bodies[i].dump(), "application/json");
    if (!res) throw ProviderUnavailableError(where + ": " + httplib::to_string(res.error()) + " (" + cfg_.url + ")");
    responses[i] = transcript_entry(bodies[i], res->status, res->body)["response"];
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < bodies.size();) {
      try {
        one(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg_.concurrency), bodies.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (cfg_.record_path) {
    std::ofstream out(*cfg_.record_path, std::ios::app);
    if (!out) throw IoError("cannot write provider transcript " + cfg_.record_path->string());
    for (std::size_t i = 0; i < bodies.size(); ++i)
      if (!responses[i].is_null()) out << nlohmann::json{{"request", bodies[i]}, {"response", responses[i]}}.dump() << '\n';
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ProviderResult result;
  result.provider_id = id();
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    auto items = items_from_response(responses[i], "provider request " + std::to_string(i + 1));
    result.items.insert(result.items.end(), items.begin(), items.end());
  }
  result.raw_metadata = {{"requests", bodies.size()}, {"model", cfg_.model}, {"replayed", replay_ != nullptr}};
  return result;
}

}  // namespace nv
