#include "cocot/clients.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "cocot/errors.hpp"
#include "cocot/records.hpp"
#include "cocot/text.hpp"

namespace cocot::clients {

using records::Json;

void validate(const ModelRequest& req) {
  if (trim(req.prompt).empty()) throw UsageError("model request prompt is empty");
  if (!(req.temperature >= 0.0)) throw UsageError("model request temperature must be >= 0");
}

std::string image_ref(const std::string& image_path, const std::optional<BBox>& crop) {
  if (!crop) return image_path;
  return image_path + "#crop=" + std::to_string(crop->x1()) + "," + std::to_string(crop->y1()) + "," +
         std::to_string(crop->x2()) + "," + std::to_string(crop->y2());
}

std::string request_digest(const ModelRequest& req) {
  std::string data = req.prompt;
  for (const auto& ref : req.image_refs) {
    data += '\0';
    data += ref;
  }
  return fnv1a_hex(data);
}

// ---------------------------------------------------------------- scripted

ScriptedModelClient::ScriptedModelClient(std::vector<FixtureRule> rules) : rules_(std::move(rules)) {
  for (const auto& r : rules_) {
    if (r.keys.empty()) throw UsageError("fixture rule without key");
    if (r.kind == FixtureRule::Kind::digest && r.keys.size() != 1) throw UsageError("digest rule takes one key");
  }
}

std::vector<FixtureRule> ScriptedModelClient::read_rules(const std::filesystem::path& path) {
  std::vector<FixtureRule> rules;
  std::size_t n = 0;
  for (const auto& row : records::read_json_lines(path)) {
    ++n;
    auto where = path.string() + ": fixture " + std::to_string(n);
    if (!row.is_object() || !row.contains("key_kind") || !row.contains("key") || !row.contains("response")) {
      throw DecodeError(where + ": needs key_kind, key and response");
    }
    FixtureRule rule;
    const auto kind = row["key_kind"].is_string() ? row["key_kind"].get<std::string>() : std::string{};
    if (kind == "digest") {
      rule.kind = FixtureRule::Kind::digest;
    } else if (kind == "substring") {
      rule.kind = FixtureRule::Kind::substring;
    } else {
      throw DecodeError(where + ": key_kind must be digest or substring");
    }
    const auto& key = row["key"];
    if (key.is_string()) {
      rule.keys.push_back(key.get<std::string>());
    } else if (key.is_array() && !key.empty() && std::ranges::all_of(key, [](const Json& k) { return k.is_string(); })) {
      for (const auto& k : key) rule.keys.push_back(k.get<std::string>());
    } else {
      throw DecodeError(where + ": key must be a string or a non-empty list of strings");
    }
    if (!row["response"].is_string()) throw DecodeError(where + ": response must be a string");
    rule.response = row["response"].get<std::string>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

ScriptedModelClient ScriptedModelClient::from_file(const std::filesystem::path& path) {
  auto rules = read_rules(path);
  try {
    return ScriptedModelClient(std::move(rules));
  } catch (const UsageError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
}

std::string ScriptedModelClient::complete(const ModelRequest& req) {
  validate(req);
  ++calls_;
  const auto digest = request_digest(req);
  for (const auto& r : rules_) {
    if (r.kind == FixtureRule::Kind::digest && r.keys.front() == digest) return r.response;
  }
  const FixtureRule* best = nullptr;
  std::size_t best_len = 0;
  for (const auto& r : rules_) {
    if (r.kind != FixtureRule::Kind::substring) continue;
    std::size_t len = 0;
    bool all = true;
    for (const auto& k : r.keys) {
      if (req.prompt.find(k) == std::string::npos) {
        all = false;
        break;
      }
      len += k.size();
    }
    if (all && (best == nullptr || len > best_len)) {
      best = &r;
      best_len = len;
    }
  }
  if (best == nullptr) throw FixtureMissError(digest);
  return best->response;
}

FixtureOcrClient::FixtureOcrClient(std::vector<OcrPage> pages) {
  for (auto& p : pages) {
    auto key = p.image_path;
    pages_.insert_or_assign(std::move(key), std::move(p));
  }
}

FixtureOcrClient FixtureOcrClient::from_file(const std::filesystem::path& path) {
  return FixtureOcrClient(records::read_ocr_pages(path));
}

OcrPage FixtureOcrClient::ocr(const std::string& ref) {
  const auto path = ref.substr(0, ref.find("#crop="));
  auto it = pages_.find(path);
  if (it == pages_.end()) throw ClientError("no OCR fixture for image " + path);
  return it->second;
}

// ---------------------------------------------------------------- limiter

FairLimiter::FairLimiter(int capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw UsageError("limiter capacity must be >= 1");
}

void FairLimiter::acquire() {
  std::unique_lock lock(mu_);
  const auto ticket = next_ticket_++;
  cv_.wait(lock, [&] { return ticket == serving_ && in_flight_ < capacity_; });
  ++serving_;
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
  cv_.notify_all();
}

void FairLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_all();
}

int FairLimiter::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

int FairLimiter::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

// ---------------------------------------------------------------- http

void validate(const ClientConfig& cfg) {
  if (cfg.endpoint.empty()) throw ConfigError("client.endpoint", "must not be empty");
  if (cfg.endpoint.rfind("http://", 0) != 0 && cfg.endpoint.rfind("https://", 0) != 0) {
    throw ConfigError("client.endpoint", "must start with http:// or https://");
  }
  if (cfg.timeout_ms <= 0) throw ConfigError("client.timeout_ms", "must be > 0");
  if (cfg.max_retries < 0) throw ConfigError("client.max_retries", "must be >= 0");
  if (cfg.max_concurrent < 1) throw ConfigError("client.max_concurrent", "must be >= 1");
  if (cfg.retry_backoff_ms < 0) throw ConfigError("client.retry_backoff_ms", "must be >= 0");
}

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = endpoint.substr(0, path_start);
  if (path_start != std::string::npos) e.prefix = endpoint.substr(path_start);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

bool retryable(int status) { return status == 429 || status >= 500; }

class SlotGuard {
 public:
  explicit SlotGuard(FairLimiter& l) : l_(l) { l_.acquire(); }
  ~SlotGuard() { l_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  FairLimiter& l_;
};

// POSTs a JSON body with retries; returns the body of the first 2xx response.
std::string post_json(const ClientConfig& cfg, FairLimiter& limiter, const std::string& route, const std::string& body) {
  const auto ep = split_endpoint(cfg.endpoint);
  const auto path = ep.prefix + route;
  httplib::Headers headers;
  if (cfg.auth_token && !cfg.auth_token->empty()) headers.emplace("Authorization", "Bearer " + *cfg.auth_token);

  std::string last_error;
  int last_status = 0;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0 && cfg.retry_backoff_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(cfg.retry_backoff_ms) << (attempt - 1)));
    }
    httplib::Result res;
    {
      SlotGuard slot(limiter);
      httplib::Client cli(ep.origin);
      const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      res = cli.Post(path, headers, body, "application/json");
    }
    if (!res) {
      last_status = 0;
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable(res->status)) break;
  }
  throw ClientError("POST " + cfg.endpoint + route + " failed: " + last_error, last_status);
}

}  // namespace

std::string encode_http_request(const ModelRequest& req) {
  Json parts = Json::array();
  Json text;
  text["text"] = req.prompt;
  parts.push_back(text);
  for (const auto& ref : req.image_refs) {
    Json img;
    img["image_ref"] = ref;
    parts.push_back(img);
  }
  Json message;
  message["role"] = "user";
  message["parts"] = parts;
  Json body;
  body["messages"] = Json::array({message});
  body["temperature"] = records::round6(req.temperature);
  body["max_output_chars"] = req.max_output_chars;
  return records::to_line(body);
}

HttpModelClient::HttpModelClient(ClientConfig cfg) : cfg_(std::move(cfg)), limiter_((validate(cfg_), cfg_.max_concurrent)) {}

std::string HttpModelClient::complete(const ModelRequest& req) {
  validate(req);
  const auto body = post_json(cfg_, limiter_, "/completions", encode_http_request(req));
  Json j;
  try {
    j = Json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ClientError("completion response is not JSON");
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ClientError("completion response lacks a string 'text' field");
  }
  auto text = j["text"].get<std::string>();
  if (text.size() > req.max_output_chars) text.resize(req.max_output_chars);
  return text;
}

HttpOcrClient::HttpOcrClient(ClientConfig cfg) : cfg_(std::move(cfg)), limiter_((validate(cfg_), cfg_.max_concurrent)) {}

OcrPage HttpOcrClient::ocr(const std::string& ref) {
  Json req;
  req["image_ref"] = ref;
  const auto body = post_json(cfg_, limiter_, "/ocr", records::to_line(req));
  try {
    return records::decode_ocr_page(records::parse_line(body));
  } catch (const DecodeError& e) {
    throw ClientError(std::string("OCR response rejected: ") + e.what());
  }
}

}  // namespace cocot::clients
