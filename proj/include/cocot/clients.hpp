#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cocot/types.hpp"

namespace cocot::clients {

struct ModelRequest {
  std::string prompt;
  // Image paths or URLs; crops are written as "<path>#crop=x1,y1,x2,y2".
  std::vector<std::string> image_refs;
  double temperature = 0.0;
  std::size_t max_output_chars = 4096;
};

/// Throws UsageError for an empty prompt or negative temperature.
void validate(const ModelRequest& req);

/// "<image_path>" or "<image_path>#crop=x1,y1,x2,y2".
std::string image_ref(const std::string& image_path, const std::optional<BBox>& crop = std::nullopt);

/// Stable digest of (prompt, image_refs), used as the exact fixture key.
std::string request_digest(const ModelRequest& req);

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Returns the model's text. Implementations must be safe to call concurrently.
  virtual std::string complete(const ModelRequest& req) = 0;
};

class OcrClient {
 public:
  virtual ~OcrClient() = default;
  /// Word boxes in original-image pixels. Unknown image -> ClientError.
  virtual OcrPage ocr(const std::string& image_ref) = 0;
};

struct FixtureRule {
  enum class Kind { digest, substring };
  Kind kind = Kind::substring;
  // digest: exactly one key. substring: every key must occur in the prompt.
  std::vector<std::string> keys;
  std::string response;
};

/// Replays canned responses. Digest rules are tried first; among matching
/// substring rules the one with the most key characters wins, earlier rules
/// breaking ties. Read-only after construction.
class ScriptedModelClient final : public ModelClient {
 public:
  explicit ScriptedModelClient(std::vector<FixtureRule> rules);
  /// Line-delimited {"key_kind": "digest"|"substring", "key": text | [text], "response": text}.
  static ScriptedModelClient from_file(const std::filesystem::path& path);
  static std::vector<FixtureRule> read_rules(const std::filesystem::path& path);

  std::string complete(const ModelRequest& req) override;
  std::size_t call_count() const { return calls_.load(); }

 private:
  std::vector<FixtureRule> rules_;
  std::atomic<std::size_t> calls_{0};
};

/// Serves pre-computed OcrPage records keyed by image path. A "#crop=" suffix
/// on the ref is ignored.
class FixtureOcrClient final : public OcrClient {
 public:
  explicit FixtureOcrClient(std::vector<OcrPage> pages);
  static FixtureOcrClient from_file(const std::filesystem::path& path);

  OcrPage ocr(const std::string& image_ref) override;

 private:
  std::map<std::string, OcrPage, std::less<>> pages_;
};

struct ClientConfig {
  std::string endpoint;
  int timeout_ms = 30000;
  int max_retries = 3;
  int max_concurrent = 4;
  int retry_backoff_ms = 200;  // doubled after every failed attempt
  std::optional<std::string> auth_token;
};

/// Throws ConfigError on out-of-range fields.
void validate(const ClientConfig& cfg);

/// Counting gate that admits waiters strictly in arrival order.
class FairLimiter {
 public:
  explicit FairLimiter(int capacity);
  void acquire();
  void release();
  int in_flight() const;
  int peak() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int capacity_;
  int in_flight_ = 0;
  int peak_ = 0;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t serving_ = 0;
};

/// Chat-style HTTP client. POST {endpoint}/completions with
///   {"messages":[{"role":"user","parts":[{"text":...},{"image_ref":...}]}],
///    "temperature":t,"max_output_chars":n}
/// and reads {"text": ...} from the response. Transport errors, 429 and 5xx
/// are retried with exponential backoff; other statuses fail immediately.
class HttpModelClient final : public ModelClient {
 public:
  explicit HttpModelClient(ClientConfig cfg);
  std::string complete(const ModelRequest& req) override;

  /// Highest number of simultaneously in-flight requests seen so far.
  int peak_in_flight() const { return limiter_.peak(); }

 private:
  ClientConfig cfg_;
  FairLimiter limiter_;
};

/// OCR service client: POST {endpoint}/ocr with {"image_ref": ...}; the response
/// body is an OcrPage record.
class HttpOcrClient final : public OcrClient {
 public:
  explicit HttpOcrClient(ClientConfig cfg);
  OcrPage ocr(const std::string& image_ref) override;

 private:
  ClientConfig cfg_;
  FairLimiter limiter_;
};

/// Wire encoding of a request, exposed for contract tests.
std::string encode_http_request(const ModelRequest& req);

}  // namespace cocot::clients
