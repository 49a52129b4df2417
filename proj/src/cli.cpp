#include "cocot/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include "cocot/emitter.hpp"
#include "cocot/errors.hpp"
#include "cocot/filter.hpp"
#include "cocot/prompts.hpp"
#include "cocot/text.hpp"

namespace cocot::cli {

namespace fs = std::filesystem;
using records::Json;

// ------------------------------------------------------------------ config

namespace {

void expect_object(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be an object");
}

std::string key_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

bool get_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "must be a boolean");
  return j.get<bool>();
}

std::int64_t get_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "must be an integer");
  return j.get<std::int64_t>();
}

int get_small_int(const Json& j, const std::string& path) {
  const auto v = get_int(j, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw ConfigError(path, "out of range");
  return static_cast<int>(v);
}

double get_double(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "must be a number");
  return j.get<double>();
}

std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "must be a string");
  return j.get<std::string>();
}

Strategy get_strategy(const Json& j, const std::string& path) {
  const auto name = get_string(j, path);
  auto s = parse_strategy(name);
  if (!s) throw ConfigError(path, "unknown strategy '" + name + "'");
  return *s;
}

template <typename Handlers>
void walk(const Json& obj, const std::string& parent, const Handlers& handlers) {
  expect_object(obj, parent);
  for (const auto& [key, value] : obj.items()) {
    const auto path = key_path(parent, key);
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError(path, "unknown key");
    it->second(value, path);
  }
}

using Handler = std::function<void(const Json&, const std::string&)>;
using HandlerMap = std::map<std::string, Handler>;

std::vector<Strategy> parse_strategy_list(const std::string& csv, const std::string& path) {
  std::vector<Strategy> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    const auto name = trim(std::string_view(csv).substr(start, end - start));
    auto s = parse_strategy(name);
    if (!s) throw ConfigError(path, "unknown strategy '" + name + "'");
    if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
    start = end + 1;
  }
  return out;
}

std::optional<Strategy> parse_baseline(const std::string& name, const std::string& path) {
  if (name == "none") return std::nullopt;
  auto s = parse_strategy(name);
  if (!s) throw ConfigError(path, "unknown strategy '" + name + "'");
  return s;
}

Dataset parse_dataset_or_throw(const std::string& name, const std::string& path) {
  auto d = parse_dataset(name);
  if (!d) throw ConfigError(path, "unknown dataset '" + name + "'");
  return *d;
}

}  // namespace

void apply_config(RunConfig& cfg, const Json& doc) {
  auto path_field = [](fs::path& target) {
    return [&target](const Json& j, const std::string& p) { target = get_string(j, p); };
  };
  const HandlerMap paths{
      {"input", path_field(cfg.paths.input)},
      {"grounded", path_field(cfg.paths.grounded)},
      {"chained", path_field(cfg.paths.chained)},
      {"fixtures", path_field(cfg.paths.fixtures)},
      {"ocr_fixtures", path_field(cfg.paths.ocr_fixtures)},
      {"out_dir", path_field(cfg.paths.out_dir)},
  };
  const HandlerMap grounding{
      {"similarity_threshold", [&](const Json& j, const std::string& p) { cfg.grounding.similarity_threshold = get_double(j, p); }},
      {"max_regions", [&](const Json& j, const std::string& p) { cfg.grounding.max_regions = get_small_int(j, p); }},
      {"line_merge_gap_px", [&](const Json& j, const std::string& p) { cfg.grounding.line_merge_gap_px = get_small_int(j, p); }},
  };
  const HandlerMap chain{
      {"max_steps",
       [&](const Json& j, const std::string& p) {
         if (j.is_null()) cfg.chain.max_steps.reset();
         else cfg.chain.max_steps = get_small_int(j, p);
       }},
      {"require_exploration", [&](const Json& j, const std::string& p) { cfg.chain.require_exploration = get_bool(j, p); }},
  };
  const HandlerMap match{
      {"strip_articles", [&](const Json& j, const std::string& p) { cfg.match.strip_articles = get_bool(j, p); }},
      {"numeric_rel_tol", [&](const Json& j, const std::string& p) { cfg.match.numeric_rel_tol = get_double(j, p); }},
      {"containment_max_gold_tokens",
       [&](const Json& j, const std::string& p) { cfg.match.containment_max_gold_tokens = get_small_int(j, p); }},
  };
  const HandlerMap client{
      {"endpoint", [&](const Json& j, const std::string& p) { cfg.client.endpoint = get_string(j, p); }},
      {"timeout_ms", [&](const Json& j, const std::string& p) { cfg.client.timeout_ms = get_small_int(j, p); }},
      {"max_retries", [&](const Json& j, const std::string& p) { cfg.client.max_retries = get_small_int(j, p); }},
      {"max_concurrent", [&](const Json& j, const std::string& p) { cfg.client.max_concurrent = get_small_int(j, p); }},
      {"retry_backoff_ms", [&](const Json& j, const std::string& p) { cfg.client.retry_backoff_ms = get_small_int(j, p); }},
  };
  const HandlerMap top{
      {"seed",
       [&](const Json& j, const std::string& p) {
         if (!j.is_number_unsigned()) throw ConfigError(p, "must be a non-negative integer");
         cfg.seed = j.get<std::uint64_t>();
       }},
      {"jobs", [&](const Json& j, const std::string& p) { cfg.jobs = get_small_int(j, p); }},
      {"strict", [&](const Json& j, const std::string& p) { cfg.strict = get_bool(j, p); }},
      {"split", [&](const Json& j, const std::string& p) { cfg.split = get_bool(j, p); }},
      {"dataset",
       [&](const Json& j, const std::string& p) {
         if (j.is_null()) cfg.dataset.reset();
         else cfg.dataset = parse_dataset_or_throw(get_string(j, p), p);
       }},
      {"strategies",
       [&](const Json& j, const std::string& p) {
         if (!j.is_array() || j.empty()) throw ConfigError(p, "must be a non-empty list of strategy names");
         cfg.strategies.clear();
         for (std::size_t i = 0; i < j.size(); ++i) {
           auto s = get_strategy(j[i], p + "[" + std::to_string(i) + "]");
           if (std::find(cfg.strategies.begin(), cfg.strategies.end(), s) == cfg.strategies.end()) cfg.strategies.push_back(s);
         }
       }},
      {"baseline",
       [&](const Json& j, const std::string& p) {
         if (j.is_null()) cfg.baseline.reset();
         else cfg.baseline = parse_baseline(get_string(j, p), p);
       }},
      {"paths", [&](const Json& j, const std::string& p) { walk(j, p, paths); }},
      {"grounding", [&](const Json& j, const std::string& p) { walk(j, p, grounding); }},
      {"chain", [&](const Json& j, const std::string& p) { walk(j, p, chain); }},
      {"match", [&](const Json& j, const std::string& p) { walk(j, p, match); }},
      {"client", [&](const Json& j, const std::string& p) { walk(j, p, client); }},
  };
  walk(doc, "", top);
}

void load_config(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", path.string() + " is not valid JSON: " + e.what());
  }
  apply_config(cfg, doc);
}

void validate(const RunConfig& cfg) {
  if (cfg.jobs < 1) throw ConfigError("jobs", "must be >= 1");
  if (cfg.strategies.empty()) throw ConfigError("strategies", "must not be empty");
  if (cfg.paths.out_dir.empty()) throw ConfigError("paths.out_dir", "must not be empty");
  grounding::validate(cfg.grounding);
  chains::validate(cfg.chain);
  eval::validate(cfg.match);
  if (!cfg.client.endpoint.empty()) clients::validate(cfg.client);
}

Json effective_config(const RunConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["strict"] = cfg.strict;
  j["dataset"] = cfg.dataset ? Json(to_string(*cfg.dataset)) : Json(nullptr);
  j["split"] = cfg.split;
  Json g;
  g["similarity_threshold"] = records::round6(cfg.grounding.similarity_threshold);
  g["max_regions"] = cfg.grounding.max_regions;
  g["line_merge_gap_px"] = cfg.grounding.line_merge_gap_px;
  j["grounding"] = g;
  Json c;
  c["max_steps"] = cfg.chain.max_steps ? Json(*cfg.chain.max_steps) : Json(nullptr);
  c["require_exploration"] = cfg.chain.require_exploration;
  j["chain"] = c;
  Json m;
  m["strip_articles"] = cfg.match.strip_articles;
  m["numeric_rel_tol"] = cfg.match.numeric_rel_tol;
  m["containment_max_gold_tokens"] = cfg.match.containment_max_gold_tokens;
  j["match"] = m;
  Json cl;
  cl["mode"] = !cfg.paths.fixtures.empty() ? "scripted" : (cfg.client.endpoint.empty() ? "none" : "http");
  cl["endpoint"] = cfg.paths.fixtures.empty() ? cfg.client.endpoint : std::string{};
  cl["timeout_ms"] = cfg.client.timeout_ms;
  cl["max_retries"] = cfg.client.max_retries;
  cl["max_concurrent"] = cfg.client.max_concurrent;
  cl["retry_backoff_ms"] = cfg.client.retry_backoff_ms;
  j["client"] = cl;
  Json strategies = Json::array();
  for (auto s : cfg.strategies) strategies.push_back(to_string(s));
  j["strategies"] = strategies;
  j["baseline"] = cfg.baseline ? Json(to_string(*cfg.baseline)) : Json(nullptr);
  j["prompt_templates"] = prompts::kTemplateVersion;
  j["prompt_checksum"] = prompts::registry_checksum();
  j["stopwords"] = filter::kStopwordListVersion;
  return j;
}

// ------------------------------------------------------------------ stages

namespace {

struct Context {
  RunConfig cfg;
  std::ostream& out;
  std::ostream& err;
};

fs::path out_file(const Context& ctx, const char* name) { return ctx.cfg.paths.out_dir / name; }

fs::path require_file(const fs::path& given, const fs::path& fallback, const std::string& key) {
  const auto path = given.empty() ? fallback : given;
  if (!fs::is_regular_file(path)) throw ConfigError(key, "no such file: " + path.string());
  return path;
}

void refuse_overwrite(const fs::path& input, const fs::path& output) {
  std::error_code ec;
  if (fs::exists(output) && fs::equivalent(input, output, ec)) {
    throw ConfigError("paths.input", "input and output are the same file: " + output.string());
  }
}

void write_manifest(const Context& ctx, const std::string& stage,
                    std::vector<std::pair<std::string, std::size_t>> counts) {
  emitter::RunSummary summary{stage, ctx.cfg.seed, effective_config(ctx.cfg), std::move(counts)};
  const auto manifest = emitter::write_manifest(summary);
  const auto path = ctx.cfg.paths.out_dir / (stage + "_manifest.json");
  fs::create_directories(ctx.cfg.paths.out_dir);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << manifest.dump(2) << "\n";
  if (!f) throw Error("cannot write " + path.string());
}

// Runs fn over items on `jobs` threads. Results come back in input order.
// Exceptions other than cocot::Error stop the pool and are rethrown.
template <typename T, typename Fn>
auto parallel_map(const std::vector<T>& items, int jobs, Fn fn) -> std::vector<decltype(fn(items.front()))> {
  using R = decltype(fn(items.front()));
  std::vector<std::optional<R>> slots(items.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (!stop.load()) {
      const auto i = next.fetch_add(1);
      if (i >= items.size()) return;
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    }
  };
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), std::max<std::size_t>(items.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
  std::vector<R> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

template <typename Rec>
struct Outcome {
  std::optional<Rec> value;
  std::optional<RejectRecord> reject;
};

template <typename Rec, typename Fn>
Outcome<Rec> attempt(const std::string& id, const std::string& stage, Fn fn) {
  try {
    return Outcome<Rec>{fn(), std::nullopt};
  } catch (const Error& e) {
    return Outcome<Rec>{std::nullopt, RejectRecord{id, stage, e.what()}};
  }
}

template <typename Rec, typename IdOf>
void sort_by_id(std::vector<Rec>& v, IdOf id_of) {
  std::stable_sort(v.begin(), v.end(), [&](const Rec& a, const Rec& b) { return id_of(a) < id_of(b); });
}

void sort_rejects(std::vector<RejectRecord>& v) {
  std::stable_sort(v.begin(), v.end(), [](const RejectRecord& a, const RejectRecord& b) {
    return std::tie(a.sample_id, a.reason) < std::tie(b.sample_id, b.reason);
  });
}

std::unique_ptr<clients::ModelClient> make_model(const RunConfig& cfg) {
  if (!cfg.paths.fixtures.empty()) {
    const auto path = require_file(cfg.paths.fixtures, {}, "paths.fixtures");
    return std::make_unique<clients::ScriptedModelClient>(clients::ScriptedModelClient::read_rules(path));
  }
  if (!cfg.client.endpoint.empty()) {
    auto c = cfg.client;
    if (const char* token = std::getenv("COCOT_AUTH_TOKEN"); token && *token) c.auth_token = token;
    return std::make_unique<clients::HttpModelClient>(c);
  }
  throw ConfigError("client.endpoint", "this stage needs a model: pass --fixtures or --endpoint");
}

std::unique_ptr<clients::OcrClient> make_ocr(const RunConfig& cfg) {
  if (!cfg.paths.ocr_fixtures.empty()) {
    const auto path = require_file(cfg.paths.ocr_fixtures, {}, "paths.ocr_fixtures");
    return std::make_unique<clients::FixtureOcrClient>(records::read_ocr_pages(path));
  }
  if (!cfg.client.endpoint.empty()) {
    auto c = cfg.client;
    if (const char* token = std::getenv("COCOT_AUTH_TOKEN"); token && *token) c.auth_token = token;
    return std::make_unique<clients::HttpOcrClient>(c);
  }
  throw ConfigError("paths.ocr_fixtures", "this stage needs OCR: pass --ocr-fixtures or --endpoint");
}

int finish(const Context& ctx, const std::string& stage, std::size_t rejected) {
  if (rejected > 0 && ctx.cfg.strict) {
    ctx.err << stage << ": " << rejected << " rejected sample(s) with --strict\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_filter(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, {}, "paths.input");
  const auto passed_path = out_file(ctx, "filtered.jsonl");
  refuse_overwrite(input, passed_path);
  const auto samples = records::read_samples(input);

  std::vector<Sample> passed;
  std::vector<RejectRecord> rejects;
  std::size_t considered = 0;
  for (const auto& s : samples) {
    if (ctx.cfg.dataset && s.dataset() != *ctx.cfg.dataset) continue;
    ++considered;
    const auto rule = filter::builtin_rule(s.dataset());
    if (filter::passes_filter(s, rule)) {
      passed.push_back(s);
      continue;
    }
    const auto n = filter::extract_keywords(s.question()).size();
    rejects.push_back(RejectRecord{s.sample_id(), "filter",
                                   std::to_string(n) + " keywords, needs more than " +
                                       std::to_string(rule.min_keywords_exclusive) +
                                       (rule.compound_answer_enabled ? " or a compound answer" : "")});
  }
  sort_by_id(passed, [](const Sample& s) { return s.sample_id(); });
  sort_rejects(rejects);
  records::write_json_lines(passed_path, records::encode_all(passed));
  records::write_json_lines(out_file(ctx, "filter_rejects.jsonl"), records::encode_all(rejects));

  std::vector<std::pair<std::string, std::size_t>> counts{
      {"input", considered}, {"passed", passed.size()}, {"rejected", rejects.size()}};
  if (ctx.cfg.split) {
    auto split = filter::split_dataset(passed, ctx.cfg.seed);
    records::write_json_lines(out_file(ctx, "test.jsonl"), records::encode_all(split.test));
    records::write_json_lines(out_file(ctx, "train.jsonl"), records::encode_all(split.train));
    records::write_json_lines(out_file(ctx, "rest.jsonl"), records::encode_all(split.rest));
    counts.insert(counts.end(), {{"test", split.test.size()}, {"train", split.train.size()}, {"rest", split.rest.size()}});
  }
  write_manifest(ctx, "filter", counts);
  ctx.out << "filter: " << passed.size() << " passed, " << rejects.size() << " rejected\n";
  return kExitOk;
}

int cmd_ground(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "filtered.jsonl"), "paths.input");
  const auto output = out_file(ctx, "grounded.jsonl");
  refuse_overwrite(input, output);
  const auto samples = records::read_samples(input);

  std::set<std::string> wanted;
  for (const auto& s : samples) wanted.insert(s.sample_id());
  std::vector<GroundedSample> grounded;
  if (fs::exists(output)) {
    for (auto& g : records::read_grounded(output)) {
      if (wanted.contains(g.sample().sample_id())) grounded.push_back(std::move(g));
    }
  }
  std::set<std::string> done;
  for (const auto& g : grounded) done.insert(g.sample().sample_id());
  std::vector<Sample> todo;
  for (const auto& s : samples) {
    if (!done.contains(s.sample_id())) todo.push_back(s);
  }

  std::unique_ptr<clients::ModelClient> model;
  std::unique_ptr<clients::OcrClient> ocr;
  if (!todo.empty()) {
    model = make_model(ctx.cfg);
    ocr = make_ocr(ctx.cfg);
  }
  const auto results = parallel_map(todo, ctx.cfg.jobs, [&](const Sample& s) {
    return attempt<GroundedSample>(s.sample_id(), "ground",
                                   [&] { return grounding::ground_sample(*model, *ocr, s, ctx.cfg.grounding); });
  });
  std::vector<RejectRecord> rejects;
  for (const auto& r : results) {
    if (r.value) grounded.push_back(*r.value);
    else rejects.push_back(*r.reject);
  }
  sort_by_id(grounded, [](const GroundedSample& g) { return g.sample().sample_id(); });
  sort_rejects(rejects);
  records::write_json_lines(output, records::encode_all(grounded));
  records::write_json_lines(out_file(ctx, "ground_rejects.jsonl"), records::encode_all(rejects));

  std::size_t multi = 0;
  for (const auto& g : grounded) multi += g.regions().size() >= 2 ? 1 : 0;
  write_manifest(ctx, "ground",
                 {{"input", samples.size()}, {"grounded", grounded.size()}, {"multi_region", multi}, {"rejected", rejects.size()}});
  ctx.out << "ground: " << grounded.size() << " grounded (" << done.size() << " resumed), " << rejects.size()
          << " rejected\n";
  return finish(ctx, "ground", rejects.size());
}

int cmd_chain(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "grounded.jsonl"), "paths.input");
  const auto output = out_file(ctx, "chained.jsonl");
  refuse_overwrite(input, output);
  const auto samples = records::read_grounded(input);

  std::set<std::string> wanted;
  for (const auto& g : samples) wanted.insert(g.sample().sample_id());
  std::vector<ChainedSample> chained;
  if (fs::exists(output)) {
    for (auto& c : records::read_chained(output)) {
      if (wanted.contains(c.grounded.sample().sample_id())) chained.push_back(std::move(c));
    }
  }
  std::set<std::string> done;
  for (const auto& c : chained) done.insert(c.grounded.sample().sample_id());
  std::vector<GroundedSample> todo;
  for (const auto& g : samples) {
    if (!done.contains(g.sample().sample_id())) todo.push_back(g);
  }

  std::unique_ptr<clients::ModelClient> model;
  if (!todo.empty()) model = make_model(ctx.cfg);
  const auto results = parallel_map(todo, ctx.cfg.jobs, [&](const GroundedSample& g) {
    return attempt<ChainedSample>(g.sample().sample_id(), "chain", [&] {
      auto chain = chains::build_chain(*model, g, ctx.cfg.chain);
      auto text = chains::render_chain(chain, g);
      return ChainedSample{g, std::move(chain), std::move(text)};
    });
  });
  std::vector<RejectRecord> rejects;
  for (const auto& r : results) {
    if (r.value) chained.push_back(*r.value);
    else rejects.push_back(*r.reject);
  }
  sort_by_id(chained, [](const ChainedSample& c) { return c.grounded.sample().sample_id(); });
  sort_rejects(rejects);
  records::write_json_lines(output, records::encode_all(chained));
  records::write_json_lines(out_file(ctx, "chain_rejects.jsonl"), records::encode_all(rejects));

  std::size_t truncated = 0, steps = 0;
  for (const auto& c : chained) {
    truncated += c.chain.truncated() ? 1 : 0;
    steps += c.chain.steps().size();
  }
  write_manifest(ctx, "chain",
                 {{"input", samples.size()}, {"chained", chained.size()}, {"steps", steps}, {"truncated", truncated},
                  {"rejected", rejects.size()}});
  ctx.out << "chain: " << chained.size() << " chained (" << done.size() << " resumed), " << rejects.size()
          << " rejected\n";
  return finish(ctx, "chain", rejects.size());
}

int cmd_emit(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "chained.jsonl"), "paths.input");
  refuse_overwrite(input, out_file(ctx, "stage1.jsonl"));
  auto chained = records::read_chained(input);
  sort_by_id(chained, [](const ChainedSample& c) { return c.grounded.sample().sample_id(); });

  std::vector<Json> stage1, stage2, gold;
  std::size_t unreferenced = 0;
  for (const auto& c : chained) {
    for (const auto& r : emitter::decompose(c.grounded, c.chain)) stage1.push_back(emitter::encode(r));
    stage2.push_back(emitter::encode(emitter::emit_stage2(c.grounded, c.chain_text)));
    gold.push_back(emitter::encode(emitter::gold_of(c.grounded)));
    unreferenced += c.grounded.regions().size() - c.chain.steps().size();
  }
  records::write_json_lines(out_file(ctx, "stage1.jsonl"), stage1);
  records::write_json_lines(out_file(ctx, "stage2.jsonl"), stage2);
  records::write_json_lines(out_file(ctx, "gold.jsonl"), gold);
  write_manifest(ctx, "emit",
                 {{"samples", chained.size()}, {"stage1_records", stage1.size()}, {"stage2_records", stage2.size()},
                  {"unreferenced_regions", unreferenced}});
  ctx.out << "emit: " << stage1.size() << " stage-1 and " << stage2.size() << " stage-2 records\n";
  return kExitOk;
}

std::size_t strategy_rank(Strategy s) {
  const auto& all = all_strategies();
  return static_cast<std::size_t>(std::find(all.begin(), all.end(), s) - all.begin());
}

void sort_predictions(std::vector<PredictionRecord>& preds) {
  std::stable_sort(preds.begin(), preds.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
    return std::pair(a.sample_id, strategy_rank(a.strategy)) < std::pair(b.sample_id, strategy_rank(b.strategy));
  });
}

int cmd_infer(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "grounded.jsonl"), "paths.input");
  const auto output = out_file(ctx, "predictions.jsonl");
  refuse_overwrite(input, output);
  const auto samples = records::read_grounded(input);

  std::map<std::string, std::string> chain_texts;
  {
    fs::path chained_path = ctx.cfg.paths.chained;
    if (chained_path.empty() && fs::exists(out_file(ctx, "chained.jsonl"))) chained_path = out_file(ctx, "chained.jsonl");
    if (!chained_path.empty()) {
      for (const auto& c : records::read_chained(require_file(chained_path, {}, "paths.chained"))) {
        chain_texts[c.grounded.sample().sample_id()] = c.chain_text;
      }
    }
  }

  std::set<std::string> wanted;
  for (const auto& g : samples) wanted.insert(g.sample().sample_id());
  std::vector<PredictionRecord> preds;
  if (fs::exists(output)) {
    for (auto& p : records::read_predictions(output)) {
      const bool selected = std::find(ctx.cfg.strategies.begin(), ctx.cfg.strategies.end(), p.strategy) != ctx.cfg.strategies.end();
      if (wanted.contains(p.sample_id) && selected) preds.push_back(std::move(p));
    }
  }
  std::set<std::pair<std::string, Strategy>> done;
  for (const auto& p : preds) done.emplace(p.sample_id, p.strategy);

  struct Job {
    const GroundedSample* sample;
    Strategy strategy;
  };
  std::vector<Job> todo;
  for (const auto& g : samples) {
    for (auto s : ctx.cfg.strategies) {
      if (!done.contains({g.sample().sample_id(), s})) todo.push_back(Job{&g, s});
    }
  }
  std::unique_ptr<clients::ModelClient> model;
  if (!todo.empty()) model = make_model(ctx.cfg);
  const auto results = parallel_map(todo, ctx.cfg.jobs, [&](const Job& job) {
    const auto& id = job.sample->sample().sample_id();
    auto out = attempt<PredictionRecord>(id, "infer", [&] {
      std::optional<std::string> chain;
      if (auto it = chain_texts.find(id); it != chain_texts.end()) chain = it->second;
      return eval::run_strategy(job.strategy, *model, *job.sample, chain, ctx.cfg.match);
    });
    if (out.reject) out.reject->reason = std::string(to_string(job.strategy)) + ": " + out.reject->reason;
    return out;
  });
  std::vector<RejectRecord> rejects;
  for (const auto& r : results) {
    if (r.value) preds.push_back(*r.value);
    else rejects.push_back(*r.reject);
  }
  sort_predictions(preds);
  sort_rejects(rejects);
  records::write_json_lines(output, records::encode_all(preds));
  records::write_json_lines(out_file(ctx, "infer_rejects.jsonl"), records::encode_all(rejects));

  std::size_t correct = 0;
  for (const auto& p : preds) correct += p.correct ? 1 : 0;
  write_manifest(ctx, "infer",
                 {{"samples", samples.size()}, {"predictions", preds.size()}, {"correct", correct}, {"rejected", rejects.size()}});
  ctx.out << "infer: " << preds.size() << " predictions (" << done.size() << " resumed), " << rejects.size()
          << " rejected\n";
  return finish(ctx, "infer", rejects.size());
}

int cmd_eval(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "predictions.jsonl"), "paths.input");
  const auto grounded_path = require_file(ctx.cfg.paths.grounded, out_file(ctx, "grounded.jsonl"), "paths.grounded");
  const auto output = out_file(ctx, "scored_predictions.jsonl");
  refuse_overwrite(input, output);
  auto preds = records::read_predictions(input);
  std::map<std::string, std::vector<std::string>> golds;
  for (const auto& g : records::read_grounded(grounded_path)) golds[g.sample().sample_id()] = g.sample().answers();

  std::vector<std::string> missing;
  std::size_t correct = 0, bbox_failed = 0;
  for (auto& p : preds) {
    auto it = golds.find(p.sample_id);
    if (it == golds.end()) {
      missing.push_back(p.sample_id);
      continue;
    }
    p = eval::rescore(std::move(p), it->second, ctx.cfg.match);
    correct += p.correct ? 1 : 0;
    bbox_failed += p.bbox_parse_failed ? 1 : 0;
  }
  if (!missing.empty()) throw ReportError("predictions without a grounded sample: " + join(missing, ", "), missing);
  sort_predictions(preds);
  records::write_json_lines(output, records::encode_all(preds));
  write_manifest(ctx, "eval", {{"predictions", preds.size()}, {"correct", correct}, {"bbox_parse_failed", bbox_failed}});
  ctx.out << "eval: " << correct << " of " << preds.size() << " correct\n";
  return kExitOk;
}

int cmd_report(const Context& ctx) {
  const auto input = require_file(ctx.cfg.paths.input, out_file(ctx, "scored_predictions.jsonl"), "paths.input");
  const auto grounded_path = require_file(ctx.cfg.paths.grounded, out_file(ctx, "grounded.jsonl"), "paths.grounded");
  const auto preds = records::read_predictions(input);
  const auto index = eval::index_of(records::read_grounded(grounded_path));
  const auto report = eval::accuracy_report(preds, index, ctx.cfg.baseline);
  const auto text = eval::render_text(report);

  fs::create_directories(ctx.cfg.paths.out_dir);
  {
    std::ofstream f(out_file(ctx, "report.txt"), std::ios::binary | std::ios::trunc);
    f << text;
  }
  {
    std::ofstream f(out_file(ctx, "report.json"), std::ios::binary | std::ios::trunc);
    f << eval::render_json(report).dump(2) << "\n";
  }
  write_manifest(ctx, "report", {{"predictions", preds.size()}, {"rows", report.rows.size()}});
  ctx.out << text;
  return kExitOk;
}

int cmd_prompt_dump(const Context& ctx) {
  for (auto id : prompts::all_templates()) {
    const auto& t = prompts::get(id);
    Json j;
    j["name"] = t.name;
    j["placeholders"] = prompts::placeholders_in(t.body);
    j["body"] = t.body;
    ctx.out << records::to_line(j) << "\n";
  }
  Json summary;
  summary["template_version"] = prompts::kTemplateVersion;
  summary["checksum"] = prompts::registry_checksum();
  ctx.out << records::to_line(summary) << "\n";
  return kExitOk;
}

}  // namespace

// ------------------------------------------------------------------ entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-grounded chain-of-thought dataset and evaluation pipeline", "cocot"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, input, grounded, chained, fixtures, ocr_fixtures, endpoint, out_dir, dataset, strategies, baseline;
  std::uint64_t seed = 0;
  int jobs = 4;
  bool strict = false, split = false;
  auto* o_config = app.add_option("--config", config_path, "JSON run configuration; flags override it");
  auto* o_seed = app.add_option("--seed", seed, "seed for the test/train split");
  auto* o_jobs = app.add_option("--jobs", jobs, "worker threads per stage (default 4)");
  auto* o_strict = app.add_flag("--strict", strict, "exit 1 when any sample is rejected");
  auto* o_input = app.add_option("--input", input, "stage input file");
  auto* o_grounded = app.add_option("--grounded", grounded, "grounded records for infer/eval/report");
  auto* o_chained = app.add_option("--chained", chained, "chained records supplying chain text to infer");
  auto* o_fixtures = app.add_option("--fixtures", fixtures, "scripted model responses (offline mode)");
  auto* o_ocr = app.add_option("--ocr-fixtures", ocr_fixtures, "OCR pages (offline mode)");
  auto* o_endpoint = app.add_option("--endpoint", endpoint, "model/OCR service base URL (HTTP mode)");
  auto* o_out = app.add_option("--out-dir", out_dir, "directory for stage outputs");
  auto* o_dataset = app.add_option("--dataset", dataset, "restrict filtering to one dataset");
  auto* o_split = app.add_flag("--split", split, "also write test/train/rest splits of the filtered samples");
  auto* o_strategies = app.add_option("--strategies", strategies, "comma-separated inference strategies");
  auto* o_baseline = app.add_option("--baseline", baseline, "strategy the delta table compares against, or none");

  const std::vector<std::pair<std::string, int (*)(const Context&)>> commands{
      {"filter", cmd_filter}, {"ground", cmd_ground}, {"chain", cmd_chain},   {"emit", cmd_emit},
      {"infer", cmd_infer},   {"eval", cmd_eval},     {"report", cmd_report}, {"prompt-dump", cmd_prompt_dump},
  };
  const std::map<std::string, std::string> descriptions{
      {"filter", "keep samples passing the per-dataset complexity rules"},
      {"ground", "propose and OCR-correct question regions"},
      {"chain", "build region-level reasoning chains"},
      {"emit", "write the two-stage training records"},
      {"infer", "run inference strategies"},
      {"eval", "re-score predictions against gold answers"},
      {"report", "accuracy tables with deltas against a baseline"},
      {"prompt-dump", "print the prompt template registry"},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name, descriptions.at(name));

  std::vector<std::string> argv_store{"cocot"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    RunConfig cfg;
    if (*o_config) load_config(cfg, config_path);
    if (*o_seed) cfg.seed = seed;
    if (*o_jobs) cfg.jobs = jobs;
    if (*o_strict) cfg.strict = strict;
    if (*o_split) cfg.split = split;
    if (*o_input) cfg.paths.input = input;
    if (*o_grounded) cfg.paths.grounded = grounded;
    if (*o_chained) cfg.paths.chained = chained;
    if (*o_fixtures) cfg.paths.fixtures = fixtures;
    if (*o_ocr) cfg.paths.ocr_fixtures = ocr_fixtures;
    if (*o_endpoint) cfg.client.endpoint = endpoint;
    if (*o_out) cfg.paths.out_dir = out_dir;
    if (*o_dataset) cfg.dataset = parse_dataset_or_throw(dataset, "dataset");
    if (*o_strategies) cfg.strategies = parse_strategy_list(strategies, "strategies");
    if (*o_baseline) cfg.baseline = parse_baseline(baseline, "baseline");
    validate(cfg);

    Context ctx{std::move(cfg), out, err};
    for (const auto& [name, fn] : commands) {
      if (app.got_subcommand(name)) return fn(ctx);
    }
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DecodeError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ReportError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cocot::cli
