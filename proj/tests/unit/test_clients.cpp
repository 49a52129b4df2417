#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cocot/clients.hpp"
#include "cocot/errors.hpp"
#include "cocot/records.hpp"
#include "stub_server.hpp"
#include "support.hpp"

using namespace cocot;
using namespace cocot::clients;
using cocot::testing::StubServer;
using cocot::testing::TempDir;

namespace {

FixtureRule substring(std::vector<std::string> keys, std::string response) {
  return FixtureRule{FixtureRule::Kind::substring, std::move(keys), std::move(response)};
}

ModelRequest request(std::string prompt, std::vector<std::string> refs = {}) {
  ModelRequest r;
  r.prompt = std::move(prompt);
  r.image_refs = std::move(refs);
  return r;
}

}  // namespace

TEST(ModelRequest, Validation) {
  EXPECT_THROW(validate(request("  ")), UsageError);
  auto r = request("p");
  r.temperature = -0.1;
  EXPECT_THROW(validate(r), UsageError);
  r.temperature = 0.0;
  EXPECT_NO_THROW(validate(r));
}

TEST(ImageRef, CropSuffix) {
  EXPECT_EQ(image_ref("a.png"), "a.png");
  EXPECT_EQ(image_ref("a.png", BBox(1, 2, 30, 40)), "a.png#crop=1,2,30,40");
}

TEST(RequestDigest, SeparatesPromptFromRefs) {
  EXPECT_EQ(request_digest(request("p", {"a"})), request_digest(request("p", {"a"})));
  EXPECT_NE(request_digest(request("p", {"a"})), request_digest(request("p", {})));
  EXPECT_NE(request_digest(request("pa", {})), request_digest(request("p", {"a"})));
  EXPECT_EQ(request_digest(request("p", {})), fnv1a_hex("p"));
}

TEST(ScriptedClient, SubstringLookup) {
  ScriptedModelClient c({substring({"Used 1/3"}, "SELECTED_REGION: Region 1, ROLE: evidence"),
                         substring({"Used 2/3"}, "other")});
  EXPECT_EQ(c.complete(request("Progress: Used 1/3 regions.")), "SELECTED_REGION: Region 1, ROLE: evidence");
  EXPECT_EQ(c.call_count(), 1u);
}

TEST(ScriptedClient, MissListsDigest) {
  ScriptedModelClient c({substring({"hello"}, "x")});
  const auto req = request("goodbye", {"img.png"});
  try {
    c.complete(req);
    FAIL() << "expected FixtureMissError";
  } catch (const FixtureMissError& e) {
    EXPECT_EQ(e.digest, request_digest(req));
    EXPECT_NE(std::string(e.what()).find(e.digest), std::string::npos);
  }
}

TEST(ScriptedClient, DigestBeatsSubstringAndLongestSubstringWins) {
  const auto req = request("alpha beta gamma", {"i.png"});
  ScriptedModelClient c({substring({"alpha"}, "short"), substring({"alpha", "gamma"}, "long"),
                         FixtureRule{FixtureRule::Kind::digest, {request_digest(req)}, "exact"}});
  EXPECT_EQ(c.complete(req), "exact");
  EXPECT_EQ(c.complete(request("alpha beta gamma")), "long");
  EXPECT_EQ(c.complete(request("alpha only")), "short");
}

TEST(ScriptedClient, EarlierRuleBreaksTies) {
  ScriptedModelClient c({substring({"ab"}, "first"), substring({"cd"}, "second")});
  EXPECT_EQ(c.complete(request("ab cd")), "first");
}

TEST(ScriptedClient, ReferentiallyTransparentUnderConcurrency) {
  ScriptedModelClient c({substring({"q"}, "r")});
  std::vector<std::thread> ts;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    ts.emplace_back([&] {
      for (int k = 0; k < 100; ++k) ok += c.complete(request("q")) == "r";
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 800);
  EXPECT_EQ(c.call_count(), 800u);
}

TEST(ScriptedClient, FixtureFile) {
  TempDir dir("rules");
  {
    std::ofstream out(dir / "rules.jsonl");
    out << R"({"key_kind":"substring","key":"hello","response":"hi"})" << "\n";
    out << R"({"key_kind":"substring","key":["a","b"],"response":"ab"})" << "\n";
  }
  auto c = ScriptedModelClient::from_file(dir / "rules.jsonl");
  EXPECT_EQ(c.complete(request("say hello")), "hi");
  EXPECT_EQ(c.complete(request("b then a")), "ab");

  {
    std::ofstream out(dir / "bad.jsonl");
    out << R"({"key_kind":"regex","key":"x","response":"y"})" << "\n";
  }
  EXPECT_THROW(ScriptedModelClient::from_file(dir / "bad.jsonl"), DecodeError);
}

TEST(FixtureOcr, ThreeWords) {
  OcrPage page{"doc.png", {OcrWord("a", BBox(0, 0, 1, 1)), OcrWord("b", BBox(2, 0, 3, 1)), OcrWord("c", BBox(0, 2, 1, 3))}};
  FixtureOcrClient c({page});
  EXPECT_EQ(c.ocr("doc.png").words.size(), 3u);
  EXPECT_EQ(c.ocr("doc.png#crop=0,0,2,2"), page);
  EXPECT_THROW(c.ocr("other.png"), ClientError);
}

TEST(FixtureOcr, ConfidenceAboveOneRejectedAtDecode) {
  TempDir dir("ocr");
  {
    std::ofstream out(dir / "pages.jsonl");
    out << R"({"image_path":"x.png","words":[{"text":"w","bbox":[0,0,5,5],"confidence":1.2}]})" << "\n";
  }
  EXPECT_THROW(FixtureOcrClient::from_file(dir / "pages.jsonl"), DecodeError);
}

TEST(ClientConfig, Validation) {
  ClientConfig cfg;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.endpoint = "ftp://x";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.endpoint = "http://localhost:1";
  EXPECT_NO_THROW(validate(cfg));
  auto expect_key = [](ClientConfig c, const std::string& key) {
    try {
      validate(c);
      ADD_FAILURE() << "expected ConfigError for " << key;
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.key_path, key);
    }
  };
  auto c = cfg;
  c.timeout_ms = 0;
  expect_key(c, "client.timeout_ms");
  c = cfg;
  c.max_retries = -1;
  expect_key(c, "client.max_retries");
  c = cfg;
  c.max_concurrent = 0;
  expect_key(c, "client.max_concurrent");
}

TEST(HttpWire, RequestEncoding) {
  ModelRequest r = request("describe", {"a.png", "a.png#crop=0,0,5,5"});
  EXPECT_EQ(encode_http_request(r),
            R"({"messages":[{"role":"user","parts":[{"text":"describe"},{"image_ref":"a.png"},{"image_ref":"a.png#crop=0,0,5,5"}]}],"temperature":0.0,"max_output_chars":4096})");
}

namespace {

ClientConfig stub_config(const StubServer& s) {
  ClientConfig cfg;
  cfg.endpoint = s.endpoint();
  cfg.retry_backoff_ms = 1;
  cfg.timeout_ms = 5000;
  return cfg;
}

}  // namespace

TEST(HttpClient, RetriesTransientFailuresThenSucceeds) {
  StubServer server([](int n, const httplib::Request&) -> StubServer::Reply {
    if (n < 3) return {503, R"({"error":"busy"})"};
    return {200, R"({"text":"42"})"};
  });
  HttpModelClient client(stub_config(server));
  EXPECT_EQ(client.complete(request("q")), "42");
  EXPECT_EQ(server.requests(), 4);
  for (const auto& p : server.paths()) EXPECT_EQ(p, "/completions");
}

TEST(HttpClient, GivesUpAfterMaxRetries) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {503, "{}"}; });
  auto cfg = stub_config(server);
  cfg.max_retries = 2;
  HttpModelClient client(cfg);
  try {
    client.complete(request("q"));
    FAIL() << "expected ClientError";
  } catch (const ClientError& e) {
    EXPECT_EQ(e.status, 503);
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(HttpClient, ClientErrorsAreNotRetried) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {400, "{}"}; });
  HttpModelClient client(stub_config(server));
  EXPECT_THROW(client.complete(request("q")), ClientError);
  EXPECT_EQ(server.requests(), 1);
}

TEST(HttpClient, SendsWireBodyAndAuthHeader) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {200, R"({"text":"ok"})"}; });
  auto cfg = stub_config(server);
  cfg.auth_token = "secret";
  HttpModelClient client(cfg);
  const auto req = request("p", {"i.png"});
  EXPECT_EQ(client.complete(req), "ok");
  ASSERT_EQ(server.bodies().size(), 1u);
  EXPECT_EQ(server.bodies()[0], encode_http_request(req));
  EXPECT_EQ(server.auth_headers()[0], "Bearer secret");
}

TEST(HttpClient, MalformedResponseIsClientError) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {200, R"({"output":"x"})"}; });
  HttpModelClient client(stub_config(server));
  EXPECT_THROW(client.complete(request("q")), ClientError);
}

TEST(HttpClient, NeverExceedsMaxConcurrent) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {200, R"({"text":"ok"})"}; },
                    std::chrono::milliseconds(25));
  auto cfg = stub_config(server);
  cfg.max_concurrent = 3;
  HttpModelClient client(cfg);
  std::vector<std::thread> ts;
  std::atomic<int> ok{0};
  for (int i = 0; i < 12; ++i) {
    ts.emplace_back([&] { ok += client.complete(request("q")) == "ok"; });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 12);
  EXPECT_LE(server.peak_in_flight(), 3);
  EXPECT_LE(client.peak_in_flight(), 3);
  EXPECT_GE(server.peak_in_flight(), 2);  // the cap is actually exercised
}

TEST(HttpOcr, DecodesPage) {
  StubServer server([](int, const httplib::Request&) -> StubServer::Reply {
    return {200, R"({"image_path":"p.png","words":[{"text":"GDP","bbox":[10,10,40,20],"confidence":0.9}]})"};
  });
  HttpOcrClient client(stub_config(server));
  const auto page = client.ocr("p.png");
  ASSERT_EQ(page.words.size(), 1u);
  EXPECT_EQ(page.words[0].text(), "GDP");
  EXPECT_EQ(server.paths()[0], "/ocr");
}

TEST(FairLimiter, RejectsZeroCapacity) { EXPECT_THROW(FairLimiter(0), UsageError); }
