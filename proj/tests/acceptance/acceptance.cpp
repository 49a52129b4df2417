// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "../unit/oracles.hpp"
#include "../unit/pipeline.hpp"
#include "../unit/stub_server.hpp"
#include "../unit/support.hpp"
#include "cocot/chains.hpp"
#include "cocot/clients.hpp"
#include "cocot/emitter.hpp"
#include "cocot/errors.hpp"
#include "cocot/eval.hpp"
#include "cocot/filter.hpp"
#include "cocot/geometry.hpp"
#include "cocot/grounding.hpp"
#include "cocot/records.hpp"
#include "cocot/text.hpp"

using namespace cocot;
using cocot::testing::fixture;
using cocot::testing::slurp;

namespace {

using Clock = std::chrono::steady_clock;

// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++count_;
  }
  template <typename A, typename B>
  void eq(const A& a, const B& b, const std::string& what) {
    std::ostringstream ss;
    if (!(a == b)) {
      if constexpr (requires(std::ostream& o) { o << a << b; }) ss << what << " (got " << a << ", want " << b << ")";
      else ss << what;
    }
    expect(a == b, ss.str());
  }
  bool ok() const { return count_ == 0; }
  std::string summary() const {
    std::string out;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + f;
    if (count_ > failures_.size()) out += "; +" + std::to_string(count_ - failures_.size()) + " more";
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::size_t count_ = 0;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt_seconds(double s) {
  std::ostringstream ss;
  ss.precision(3);
  ss << std::fixed << s << " s";
  return ss.str();
}

// ---------------------------------------------------------------------------

std::string filter_fidelity(Check& c) {
  const auto t0 = Clock::now();
  const auto samples = records::read_samples(fixture("filter/samples.jsonl"));
  const auto labels = nlohmann::json::parse(slurp(fixture("filter/labels.json")));
  c.eq(samples.size(), std::size_t{30}, "fixture size");
  std::set<Dataset> datasets;
  std::set<std::string> got, want;
  for (const auto& s : samples) {
    datasets.insert(s.dataset());
    if (filter::passes_filter(s, filter::builtin_rule(s.dataset()))) got.insert(s.sample_id());
    if (labels.at(s.sample_id()).at("pass").get<bool>()) want.insert(s.sample_id());
  }
  c.eq(datasets.size(), std::size_t{6}, "datasets covered");
  c.expect(got == want, "pass set differs from hand labels");
  // A GQA question with exactly six keywords sits on the strict boundary.
  bool boundary_seen = false;
  for (const auto& s : samples) {
    if (s.dataset() == Dataset::gqa && filter::extract_keywords(s.question()).size() == 6) {
      boundary_seen = true;
      c.expect(!got.contains(s.sample_id()), s.sample_id() + " has exactly 6 keywords but passed");
    }
  }
  c.expect(boundary_seen, "no six-keyword GQA boundary case in fixture");
  const double dt = seconds_since(t0);
  c.expect(dt < 1.0, "runtime " + fmt_seconds(dt));
  return std::to_string(got.size()) + "/30 pass, " + fmt_seconds(dt);
}

std::string split_arithmetic(Check& c) {
  std::vector<Sample> corpus;
  corpus.reserve(10650);
  for (int i = 0; i < 10650; ++i) {
    corpus.emplace_back("s" + std::to_string(i), Dataset::docvqa, "img.png", "q", std::vector<std::string>{"a"});
  }
  auto ids = [](const std::vector<Sample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.sample_id());
    return out;
  };
  const auto first = filter::split_dataset(corpus, 42);
  c.eq(first.test.size(), std::size_t{500}, "test size");
  c.eq(first.train.size(), std::size_t{2030}, "train size");
  c.eq(first.rest.size(), std::size_t{8120}, "rest size");
  std::set<std::string> all;
  for (const auto* part : {&first.test, &first.train, &first.rest}) {
    for (const auto& id : ids(*part)) all.insert(id);
  }
  c.eq(all.size(), std::size_t{10650}, "parts are disjoint and cover the corpus");
  for (int run = 0; run < 4; ++run) {
    const auto again = filter::split_dataset(corpus, 42);
    c.expect(ids(again.test) == ids(first.test) && ids(again.train) == ids(first.train), "seed 42 not deterministic");
  }
  c.expect(ids(filter::split_dataset(corpus, 43).test) != ids(first.test), "seed has no effect");
  return "500/2030/8120";
}

std::string geometry_suite(Check& c) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::int64_t> coord(0, 1000), side(1, 400);
  auto box = [&] {
    const auto x = coord(rng), y = coord(rng);
    return BBox(x, y, x + side(rng), y + side(rng));
  };
  for (int i = 0; i < 1000; ++i) {
    const auto a = box(), b = box();
    const double ab = geometry::iou(a, b), ba = geometry::iou(b, a);
    c.expect(ab == ba, "iou not symmetric");
    c.expect(ab >= 0.0 && ab <= 1.0, "iou out of [0,1]");
    c.expect(geometry::iou(a, a) == 1.0, "iou(a,a) != 1");
  }
  const auto t = geometry::compute_pad_transform(672, 336);
  c.eq(t.scale, 0.5, "(672,336) scale");
  c.eq(t.pad_x, std::int64_t{0}, "(672,336) pad_x");
  c.eq(t.pad_y, std::int64_t{84}, "(672,336) pad_y");

  std::uniform_int_distribution<std::int64_t> img(12, 672);
  std::int64_t worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = img(rng), h = img(rng);
    const auto pt = geometry::compute_pad_transform(w, h);
    std::uniform_int_distribution<std::int64_t> xs(0, w - 4), ys(0, h - 4);
    const auto x1 = xs(rng), y1 = ys(rng);
    const auto x2 = std::uniform_int_distribution<std::int64_t>(x1 + 4, w)(rng);
    const auto y2 = std::uniform_int_distribution<std::int64_t>(y1 + 4, h)(rng);
    const BBox b(x1, y1, x2, y2);
    try {
      const auto back = geometry::map_bbox_from_padded(geometry::map_bbox_to_padded(b, pt), pt);
      worst = std::max({worst, std::abs(back.x1() - x1), std::abs(back.y1() - y1), std::abs(back.x2() - x2),
                        std::abs(back.y2() - y2)});
    } catch (const std::exception& e) {
      c.expect(false, std::string("round trip threw: ") + e.what());
    }
  }
  c.expect(worst <= 1, "round-trip error " + std::to_string(worst) + " px");
  return "max round-trip error " + std::to_string(worst) + " px";
}

std::string grounding_correction(Check& c) {
  using testing::page_of;
  const auto page = page_of({{"quarterly", "report"}, {"total", "revenue"}, {"2020", "figures"}});
  const Region wrong(BBox(300, 300, 390, 390), "total revenue");
  const auto fixed = grounding::correct_region(page, wrong);
  c.eq(fixed.source(), RegionSource::ocr_corrected, "wrong bbox not relocated");
  c.eq(grounding::text_similarity(grounding::region_text(page, fixed.bbox()), "total revenue"), 1.0,
       "relocated similarity");
  c.expect(fixed.bbox() == BBox(10, 50, 138, 70), "relocated to the wrong line");

  std::mt19937_64 rng(200);
  const std::vector<std::string> vocab{"total", "revenue", "2020", "net", "income", "growth", "gdp", "price",
                                       "tax",   "north",   "south", "rate", "loss",  "year",   "share", "cost"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1), nlines(0, 8), nwords(1, 4);
  std::uniform_int_distribution<std::int64_t> coord(0, 380), extent(10, 200);
  std::uniform_real_distribution<double> thr(0.0, 1.0);
  int lowered = 0, relocated = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<std::string>> lines(nlines(rng));
    for (auto& l : lines) {
      for (auto k = nwords(rng); k > 0; --k) l.push_back(vocab[pick(rng)]);
    }
    const auto p = page_of(lines);
    std::string description;
    for (auto k = nwords(rng); k > 0; --k) description += vocab[pick(rng)] + " ";
    const auto x = coord(rng), y = coord(rng);
    const Region r(BBox(x, y, x + extent(rng), y + extent(rng)), description);
    const auto out = grounding::correct_region(p, r, grounding::GroundingConfig{thr(rng), 8, 6});
    const double before = grounding::text_similarity(grounding::region_text(p, r.bbox()), description);
    const double after = grounding::text_similarity(grounding::region_text(p, out.bbox()), description);
    lowered += after < before;
    relocated += out.source() == RegionSource::ocr_corrected;
  }
  c.eq(lowered, 0, "fixtures with lowered similarity");

  class NoRegions final : public clients::ModelClient {
   public:
    std::string complete(const clients::ModelRequest&) override { return "I cannot find any regions."; }
  } model;
  clients::FixtureOcrClient blank({OcrPage{"page.png", {}}});
  bool failed = false;
  try {
    grounding::ground_sample(model, blank,
                             Sample("g", Dataset::docvqa, "page.png", "What was the GDP?", {"x"}, ImageSize{400, 400}));
  } catch (const GroundingFailed&) {
    failed = true;
  }
  c.expect(failed, "empty page did not raise GroundingFailed");
  return std::to_string(relocated) + "/200 relocated, none lowered";
}

std::string step_text(int region, const std::string& role, const std::string& rel) {
  return "SELECTED_REGION: Region " + std::to_string(region) + ", ROLE: " + role +
         ", REASONING: it shows the value, RELATIONSHIP: " + rel;
}

GroundedSample chain_sample(std::size_t n) {
  std::vector<Region> rs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = static_cast<std::int64_t>(10 + 50 * i);
    rs.emplace_back(BBox(x, 10, x + 40, 40), "region " + std::to_string(i));
  }
  return GroundedSample(Sample("c", Dataset::infovqa, "img.png", "Which value is highest?", {"x"}), rs, {"value"});
}

clients::ScriptedModelClient scripted_chain(const std::string& qtype, const std::vector<std::string>& steps) {
  std::vector<clients::FixtureRule> rules{{clients::FixtureRule::Kind::substring, {"Question Type Analysis: decide"}, qtype}};
  if (steps.size() == 1) {
    rules.push_back({clients::FixtureRule::Kind::substring, {"Available region: Region 0"}, steps[0]});
  }
  for (std::size_t i = 0; steps.size() > 1 && i < steps.size(); ++i) {
    rules.push_back({clients::FixtureRule::Kind::substring,
                     {"Used " + std::to_string(i) + "/" + std::to_string(steps.size()) + " regions"}, steps[i]});
  }
  return clients::ScriptedModelClient(std::move(rules));
}

class RandomPolicy final : public clients::ModelClient {
 public:
  RandomPolicy(std::uint64_t seed, std::size_t regions) : rng_(seed), n_(regions) {}
  std::string complete(const clients::ModelRequest& req) override {
    if (req.prompt.find("Question Type Analysis: decide") != std::string::npos) {
      return std::vector<std::string>{"sequential", "parallel", "unsure"}[pick(3)];
    }
    if (pick(10) == 0) return "no idea";
    static const std::vector<std::string> roles{"keyword_match", "evidence", "conclusion", "direct_answer", "bogus"};
    static const std::vector<std::string> rels{"none", "sequential", "parallel"};
    const auto role = pick(10) < 7 ? roles[1] : roles[pick(roles.size())];
    return step_text(static_cast<int>(pick(n_ + 1)), role, rels[pick(rels.size())]);
  }

 private:
  std::size_t pick(std::size_t k) { return std::uniform_int_distribution<std::size_t>(0, k - 1)(rng_); }
  std::mt19937_64 rng_;
  std::size_t n_;
};

std::string chain_machine(Check& c) {
  const auto t0 = Clock::now();
  auto tail = [](const std::string& text) { return text.substr(text.rfind('\n') + 1); };
  {
    auto m = scripted_chain("sequential", {step_text(0, "direct_answer", "none")});
    const auto gs = chain_sample(1);
    const auto chain = chains::build_chain(m, gs);
    c.eq(chain.steps().size(), std::size_t{1}, "single-step length");
    c.expect(!chain.steps().empty() && chain.steps()[0].relation() == Relation::none, "single-step relation");
    c.eq(tail(chains::render_chain(chain, gs)), std::string("Chain: A"), "single-step render");
  }
  {
    auto m = scripted_chain("sequential", {step_text(1, "keyword_match", "none"), step_text(0, "evidence", "sequential"),
                                           step_text(2, "conclusion", "sequential")});
    const auto gs = chain_sample(3);
    c.eq(tail(chains::render_chain(chains::build_chain(m, gs), gs)), std::string("Chain: A→B→C"), "sequential render");
  }
  {
    auto m = scripted_chain("parallel", {step_text(0, "keyword_match", "none"), step_text(1, "evidence", "sequential"),
                                         step_text(2, "evidence", "parallel"), step_text(3, "conclusion", "sequential")});
    const auto gs = chain_sample(4);
    c.eq(tail(chains::render_chain(chains::build_chain(m, gs), gs)), std::string("Chain: A→B, C→D"), "parallel render");
  }

  std::vector<std::string> warnings;
  const auto previous = set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
  std::mt19937_64 seeds(500);
  std::uniform_int_distribution<std::size_t> size(1, 7);
  int built = 0, failed = 0;
  for (int i = 0; i < 500; ++i) {
    const auto n = size(seeds);
    const auto gs = chain_sample(n);
    RandomPolicy policy(seeds(), n);
    try {
      const auto chain = chains::build_chain(policy, gs);
      ++built;
      c.expect(chain.steps().size() <= n, "more steps than regions");
      c.expect(chains::validate_chain(chain, gs).empty(), "validate_chain reported violations");
      std::set<std::size_t> used;
      for (const auto& s : chain.steps()) used.insert(s.region_index());
      c.expect(used.size() == chain.steps().size(), "repeated region");
    } catch (const ChainFailed&) {
      ++failed;
    }
  }
  set_warning_sink(previous);
  c.expect(built > 400, "only " + std::to_string(built) + " policies produced a chain");
  const double dt = seconds_since(t0);
  c.expect(dt < 10.0, "runtime " + fmt_seconds(dt));
  return "3 shapes, " + std::to_string(built) + " chains + " + std::to_string(failed) + " ChainFailed of 500, " +
         fmt_seconds(dt);
}

std::string parser_robustness(Check& c) {
  const std::vector<std::pair<std::string, std::size_t>> accepted{
      {"SELECTED_REGION: Region 2, ROLE: evidence, REASONING: price label, RELATIONSHIP: sequential", 2},
      {"selected_region: [Region 0]\nrole: direct_answer\nreasoning: matches\nrelationship: none", 0},
      {"SELECTED_REGION: [Region 1], ROLE: [keyword_match], REASONING: [title], RELATIONSHIP: [none]", 1},
      {"Selected_Region: Region 3, Role: Conclusion, Reasoning: sum is 12, Relationship: Parallel", 3},
      {"[SELECTED_REGION]: Region 1\n[ROLE]: evidence\n[REASONING]: axis label\n[RELATIONSHIP]: sequential", 1},
      {"**SELECTED_REGION:** Region 0\n**ROLE:** keyword_match\n**REASONING:** header\n**RELATIONSHIP:** none", 0},
      {"SELECTED REGION: Region 2, ROLE: evidence, REASONING: x, RELATIONSHIP: parallel", 2},
      {"SELECTEDREGION: 1, ROLE: evidence, REASONING: bare index, RELATIONSHIP: none", 1},
      {"  SELECTED_REGION :  Region 1 ,\n ROLE : evidence ,\n REASONING :  spaced ,\n RELATIONSHIP : none  ", 1},
      {"SELECTED_REGION: Region 0; ROLE: keyword match; REASONING: semicolons; RELATIONSHIP: none.", 0},
      {"Preamble.\nSELECTED_REGION: Region 1\nROLE: evidence\nREASONING: 2019, tallest\nRELATIONSHIP: sequential", 1},
      {"ROLE: evidence, SELECTED_REGION: Region 2, RELATIONSHIP: sequential, REASONING: reordered", 2},
      {"SELECTED_REGION: \"Region 1\", ROLE: \"direct-answer\", REASONING: \"quoted\", RELATIONSHIP: \"none\"", 1},
      {"selected_region: region 0\r\nrole: EVIDENCE\r\nreasoning: crlf\r\nrelationship: SEQUENTIAL", 0},
  };
  for (const auto& [text, region] : accepted) {
    try {
      c.eq(chains::parse_step_output(text, 4).region_index(), region, "region of: " + text);
    } catch (const std::exception& e) {
      c.expect(false, "rejected: " + text);
    }
  }
  const std::vector<std::pair<std::string, std::string>> malformed{
      {"ROLE: evidence, REASONING: x, RELATIONSHIP: none", "SELECTED_REGION"},
      {"SELECTED_REGION: Region 1, REASONING: x, RELATIONSHIP: none", "ROLE"},
      {"SELECTED_REGION: Region 1, ROLE: evidence, RELATIONSHIP: none", "REASONING"},
      {"SELECTED_REGION: Region 1, ROLE: evidence, REASONING: x", "RELATIONSHIP"},
      {"SELECTED_REGION: Region 1, ROLE: guesswork, REASONING: x, RELATIONSHIP: none", "ROLE"},
      {"SELECTED_REGION: Region 1, ROLE: evidence, REASONING: x, RELATIONSHIP: sideways", "RELATIONSHIP"},
  };
  for (const auto& [text, field] : malformed) {
    try {
      chains::parse_step_output(text, 4);
      c.expect(false, "accepted malformed: " + text);
    } catch (const ParseError& e) {
      c.eq(e.field, field, "error field for: " + text);
    }
  }
  return std::to_string(accepted.size()) + " variants accepted, " + std::to_string(malformed.size()) +
         " malformed rejected";
}

std::string emitter_counts(Check& c) {
  const auto path = fixture("emitter/chained_20.jsonl");
  std::size_t expected_stage1 = 0;
  for (const auto& row : records::read_json_lines(path)) {
    std::set<int> used;
    for (const auto& s : row.at("chain").at("steps")) used.insert(s.at("region_index").get<int>());
    expected_stage1 += used.size();
  }
  std::size_t stage1 = 0, stage2 = 0;
  const auto chained = records::read_chained(path);
  for (const auto& ch : chained) {
    stage1 += emitter::decompose(ch.grounded, ch.chain).size();
    emitter::emit_stage2(ch.grounded, ch.chain_text);
    ++stage2;
  }
  c.eq(chained.size(), std::size_t{20}, "fixture size");
  c.eq(stage1, expected_stage1, "stage1 count");
  c.eq(stage2, chained.size(), "stage2 count");
  const auto m = emitter::write_manifest(emitter::RunSummary{"emit", 0, records::Json::object(), {}});
  c.eq(m.at("lr_stage1").get<double>(), 2e-5, "lr_stage1");
  c.eq(m.at("lr_stage2").get<double>(), 1e-5, "lr_stage2");
  c.eq(m.at("batch").get<int>(), 64, "batch");
  c.eq(m.at("epochs").get<int>(), 1, "epochs");
  return std::to_string(stage1) + " stage1, " + std::to_string(stage2) + " stage2";
}

std::string matcher_oracle(Check& c) {
  const auto rows = records::read_json_lines(fixture("matcher/pairs.jsonl"));
  c.eq(rows.size(), std::size_t{200}, "fixture size");
  int agree = 0;
  for (const auto& row : rows) {
    const auto pred = row.at("prediction").get<std::string>();
    const auto golds = row.at("golds").get<std::vector<std::string>>();
    const bool ok = eval::answers_match(pred, golds) == testing::oracle_match(pred, golds);
    agree += ok;
    c.expect(ok, "disagrees on: " + pred);
  }
  c.expect(eval::answers_match("The answer is 42.", {"42"}), "\"The answer is 42.\" vs 42");
  c.expect(!filter::is_compound_answer("sandwich"), "sandwich flagged compound");
  return std::to_string(agree) + "/" + std::to_string(rows.size()) + " agree";
}

std::string end_to_end(Check& c) {
  const auto t0 = Clock::now();
  const char* old = std::getenv("SOURCE_DATE_EPOCH");
  const std::optional<std::string> saved = old ? std::optional<std::string>(old) : std::nullopt;
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  std::vector<std::map<std::string, std::string>> trees;
  for (int jobs : {4, 4, 1}) {
    testing::TempDir dir("acceptance-e2e");
    const auto results = testing::run_e2e_pipeline(dir.path(), jobs);
    c.eq(results.size(), std::size_t{7}, "stages completed with --jobs " + std::to_string(jobs));
    for (const auto& r : results) c.eq(r.code, 0, r.stage + " exit code: " + r.err);
    trees.push_back(testing::read_tree(dir.path()));
  }
  if (saved) ::setenv("SOURCE_DATE_EPOCH", saved->c_str(), 1);
  else ::unsetenv("SOURCE_DATE_EPOCH");
  c.expect(trees[0] == trees[1], "two --jobs 4 runs differ");
  c.expect(trees[0] == trees[2], "--jobs 1 and --jobs 4 differ");
  c.expect(trees[0].size() >= 20, "only " + std::to_string(trees[0].size()) + " output files");
  const double dt = seconds_since(t0);
  c.expect(dt < 30.0, "runtime " + fmt_seconds(dt));
  return std::to_string(trees[0].size()) + " files identical across 3 runs, " + fmt_seconds(dt);
}

std::string report_fidelity(Check& c) {
  const auto grounded = records::read_grounded(fixture("report/grounded.jsonl"));
  const auto preds = records::read_predictions(fixture("report/predictions.jsonl"));
  const auto r = eval::accuracy_report(preds, eval::index_of(grounded), Strategy::direct);
  auto pct = [](const eval::Cell& cell) { return eval::format_percent(cell.tenths()); };
  c.eq(r.rows.size(), std::size_t{4}, "row count");
  if (r.rows.size() == 4 && r.deltas.size() == 2) {
    c.eq(pct(r.rows[0].single), std::string("30.0"), "direct single");
    c.eq(pct(r.rows[0].multi), std::string("22.5"), "direct multi");
    c.eq(pct(r.rows[0].overall), std::string("27.0"), "direct overall");
    c.eq(pct(r.rows[1].single), std::string("42.0"), "cocot single");
    c.eq(pct(r.rows[1].multi), std::string("43.0"), "cocot multi");
    c.eq(pct(r.rows[1].overall), std::string("42.4"), "cocot overall");
    c.eq(eval::format_delta(r.deltas[0].overall), std::string("+15.4"), "overall delta");
  } else {
    c.expect(false, "unexpected report shape");
  }
  c.expect(eval::render_text(r).find("+15.4") != std::string::npos, "rendered table lacks +15.4");
  return "27.0 -> 42.4, +15.4";
}

std::string client_contract(Check& c) {
  using testing::StubServer;
  clients::ClientConfig cfg;
  cfg.retry_backoff_ms = 1;
  cfg.timeout_ms = 5000;
  {
    StubServer server([](int n, const httplib::Request&) -> StubServer::Reply {
      if (n < 2) return {503, R"({"error":"busy"})"};
      return {200, R"({"text":"42"})"};
    });
    cfg.endpoint = server.endpoint();
    clients::HttpModelClient client(cfg);
    try {
      c.eq(client.complete(clients::ModelRequest{"q", {}}), std::string("42"), "response after retries");
    } catch (const std::exception& e) {
      c.expect(false, std::string("retry did not recover: ") + e.what());
    }
    c.eq(server.requests(), 3, "requests for 503, 503, 200");
  }
  int peak = 0;
  {
    StubServer server([](int, const httplib::Request&) -> StubServer::Reply { return {200, R"({"text":"ok"})"}; },
                      std::chrono::milliseconds(25));
    cfg.endpoint = server.endpoint();
    cfg.max_concurrent = 3;
    clients::HttpModelClient client(cfg);
    std::atomic<int> ok{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 16; ++i) {
      threads.emplace_back([&] {
        try {
          ok += client.complete(clients::ModelRequest{"q", {}}) == "ok";
        } catch (const std::exception&) {
        }
      });
    }
    for (auto& t : threads) t.join();
    peak = server.peak_in_flight();
    c.eq(ok.load(), 16, "successful concurrent requests");
    c.expect(peak <= 3, "server saw " + std::to_string(peak) + " in flight");
    c.expect(peak >= 2, "concurrency never exercised");
  }
  return "3 attempts, peak in-flight " + std::to_string(peak) + " of 3";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string(Check&)>>> criteria{
      {"filter fidelity", filter_fidelity},
      {"split arithmetic", split_arithmetic},
      {"geometry suite", geometry_suite},
      {"grounding correction", grounding_correction},
      {"chain machine", chain_machine},
      {"parser robustness", parser_robustness},
      {"emitter counts", emitter_counts},
      {"matcher oracle", matcher_oracle},
      {"end-to-end determinism", end_to_end},
      {"report fidelity", report_fidelity},
      {"client contract", client_contract},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    std::string detail;
    try {
      detail = criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const bool ok = c.ok();
    failed += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
              << (ok ? detail : c.summary()) << ")\n";
  }
  return failed == 0 ? 0 : 1;
}
