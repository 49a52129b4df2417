#include "cocot/records.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "cocot/errors.hpp"
#include "cocot/text.hpp"

namespace cocot::records {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) throw DecodeError("expected object");
  auto it = j.find(key);
  if (it == j.end()) throw DecodeError(std::string("missing key '") + key + "'");
  return *it;
}

std::string get_string(const Json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw DecodeError(std::string("key '") + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const Json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw DecodeError(std::string("key '") + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_index(const Json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw DecodeError(std::string("key '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const Json& j, const char* key, std::optional<bool> fallback = std::nullopt) {
  if (fallback && (!j.is_object() || !j.contains(key))) return *fallback;
  const auto& v = field(j, key);
  if (!v.is_boolean()) throw DecodeError(std::string("key '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::vector<std::string> get_strings(const Json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_array()) throw DecodeError(std::string("key '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw DecodeError(std::string("key '") + key + "' must hold strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

template <typename E, typename Parse>
E get_enum(const Json& j, const char* key, Parse parse) {
  auto s = get_string(j, key);
  auto v = parse(s);
  if (!v) throw DecodeError(std::string("key '") + key + "' has unknown value '" + s + "'");
  return *v;
}

// Runs a constructor and reports invariant failures as decode errors.
template <typename F>
auto guarded(F f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConstructionError& e) {
    throw DecodeError(e.what());
  }
}

}  // namespace

double round6(double v) {
  if (!std::isfinite(v)) return v;
  return std::round(v * 1e6) / 1e6;
}

Json encode(const BBox& b) { return Json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

Json encode(const Region& r) {
  Json j;
  j["bbox"] = encode(r.bbox());
  j["description"] = r.description();
  j["source"] = to_string(r.source());
  if (!r.relation().empty()) j["relation"] = r.relation();
  return j;
}

Json encode(const Sample& s) {
  Json j;
  j["sample_id"] = s.sample_id();
  j["dataset"] = to_string(s.dataset());
  j["image_path"] = s.image_path();
  j["question"] = s.question();
  j["answers"] = s.answers();
  if (const auto& size = s.image_size()) {
    j["width"] = size->width;
    j["height"] = size->height;
  }
  return j;
}

Json encode(const GroundedSample& g) {
  Json j;
  j["sample"] = encode(g.sample());
  j["keywords"] = g.keywords();
  j["regions"] = encode_all(g.regions());
  return j;
}

Json encode(const OcrWord& w) {
  Json j;
  j["text"] = w.text();
  j["bbox"] = encode(w.bbox());
  j["confidence"] = round6(w.confidence());
  return j;
}

Json encode(const OcrPage& p) {
  Json j;
  j["image_path"] = p.image_path;
  j["words"] = encode_all(p.words);
  return j;
}

Json encode(const ReasoningStep& s) {
  Json j;
  j["region_index"] = s.region_index();
  j["role"] = to_string(s.role());
  j["reasoning"] = s.reasoning();
  j["relation"] = to_string(s.relation());
  return j;
}

Json encode(const ReasoningChain& c) {
  Json j;
  j["question_type"] = to_string(c.question_type());
  j["truncated"] = c.truncated();
  j["branches"] = c.branches();
  j["steps"] = encode_all(c.steps());
  return j;
}

Json encode(const ChainedSample& c) {
  Json j = encode(c.grounded);
  j["chain"] = encode(c.chain);
  j["chain_text"] = c.chain_text;
  return j;
}

Json encode(const PredictionRecord& p) {
  Json j;
  j["sample_id"] = p.sample_id;
  j["strategy"] = to_string(p.strategy);
  j["region_count"] = p.region_count;
  j["raw_response"] = p.raw_response;
  j["extracted_answer"] = p.extracted_answer;
  j["correct"] = p.correct;
  j["bbox_parse_failed"] = p.bbox_parse_failed;
  return j;
}

Json encode(const RejectRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["stage"] = r.stage;
  j["reason"] = r.reason;
  return j;
}

BBox decode_bbox(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw DecodeError("bbox must be an array of 4 numbers");
  for (const auto& v : j) {
    if (!v.is_number()) throw DecodeError("bbox must be an array of 4 numbers");
  }
  return guarded([&] { return make_bbox(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()); });
}

Region decode_region(const Json& j) {
  auto bbox = decode_bbox(field(j, "bbox"));
  auto source = get_enum<RegionSource>(j, "source", parse_region_source);
  std::string relation = j.contains("relation") ? get_string(j, "relation") : std::string{};
  return guarded([&] { return Region(bbox, get_string(j, "description"), source, relation); });
}

Sample decode_sample(const Json& j) {
  std::optional<ImageSize> size;
  if (j.is_object() && (j.contains("width") || j.contains("height"))) {
    const auto& w = field(j, "width");
    const auto& h = field(j, "height");
    if (!w.is_number_integer() || !h.is_number_integer()) throw DecodeError("width/height must be integers");
    size = ImageSize{w.get<std::int64_t>(), h.get<std::int64_t>()};
  }
  return guarded([&] {
    return Sample(get_string(j, "sample_id"), get_enum<Dataset>(j, "dataset", parse_dataset), get_string(j, "image_path"),
                  get_string(j, "question"), get_strings(j, "answers"), size);
  });
}

GroundedSample decode_grounded(const Json& j) {
  auto sample = decode_sample(field(j, "sample"));
  const auto& regions_json = field(j, "regions");
  if (!regions_json.is_array()) throw DecodeError("regions must be an array");
  std::vector<Region> regions;
  for (const auto& r : regions_json) regions.push_back(decode_region(r));
  return guarded([&] { return GroundedSample(sample, regions, get_strings(j, "keywords")); });
}

OcrWord decode_ocr_word(const Json& j) {
  auto bbox = decode_bbox(field(j, "bbox"));
  double confidence = j.is_object() && j.contains("confidence") ? get_number(j, "confidence") : 1.0;
  return guarded([&] { return OcrWord(get_string(j, "text"), bbox, confidence); });
}

OcrPage decode_ocr_page(const Json& j) {
  OcrPage page;
  page.image_path = get_string(j, "image_path");
  const auto& words = field(j, "words");
  if (!words.is_array()) throw DecodeError("words must be an array");
  for (const auto& w : words) page.words.push_back(decode_ocr_word(w));
  return page;
}

ReasoningStep decode_step(const Json& j) {
  return guarded([&] {
    return ReasoningStep(get_index(j, "region_index"), get_enum<StepRole>(j, "role", parse_step_role),
                         get_string(j, "reasoning"), get_enum<Relation>(j, "relation", parse_relation));
  });
}

ReasoningChain decode_chain(const Json& j) {
  const auto& steps_json = field(j, "steps");
  if (!steps_json.is_array()) throw DecodeError("steps must be an array");
  std::vector<ReasoningStep> steps;
  for (const auto& s : steps_json) steps.push_back(decode_step(s));
  auto chain = guarded([&] {
    return ReasoningChain(steps, get_enum<QuestionType>(j, "question_type", parse_question_type),
                          get_bool(j, "truncated", false));
  });
  if (j.contains("branches")) {
    std::vector<std::vector<std::size_t>> branches;
    try {
      branches = j.at("branches").get<std::vector<std::vector<std::size_t>>>();
    } catch (const nlohmann::json::exception&) {
      throw DecodeError("branches must be a list of index lists");
    }
    if (branches != chain.branches()) throw DecodeError("branches do not match step relations");
  }
  return chain;
}

ChainedSample decode_chained(const Json& j) {
  auto grounded = decode_grounded(j);
  auto chain = decode_chain(field(j, "chain"));
  for (const auto& s : chain.steps()) {
    if (s.region_index() >= grounded.regions().size()) {
      throw DecodeError("chain references region " + std::to_string(s.region_index()) + " out of range");
    }
  }
  return ChainedSample{std::move(grounded), std::move(chain), get_string(j, "chain_text")};
}

PredictionRecord decode_prediction(const Json& j) {
  PredictionRecord p;
  p.sample_id = get_string(j, "sample_id");
  p.strategy = get_enum<Strategy>(j, "strategy", parse_strategy);
  p.region_count = get_index(j, "region_count");
  p.raw_response = get_string(j, "raw_response");
  p.extracted_answer = get_string(j, "extracted_answer");
  p.correct = get_bool(j, "correct");
  p.bbox_parse_failed = get_bool(j, "bbox_parse_failed", false);
  return p;
}

RejectRecord decode_reject(const Json& j) {
  return RejectRecord{get_string(j, "sample_id"), get_string(j, "stage"), get_string(j, "reason")};
}

std::string to_line(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

Json parse_line(const std::string& line) {
  try {
    return Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<Json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_line(line));
    } catch (const DecodeError& e) {
      throw DecodeError(path.string() + ": " + e.what(), line_no);
    }
  }
  return out;
}

void write_json_lines(const std::filesystem::path& path, const std::vector<Json>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& row : rows) out << to_line(row) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
  auto samples = read_records(path, decode_sample);
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.sample_id()).second) throw DecodeError(path.string() + ": duplicate sample_id " + s.sample_id());
  }
  return samples;
}
std::vector<GroundedSample> read_grounded(const std::filesystem::path& path) { return read_records(path, decode_grounded); }
std::vector<ChainedSample> read_chained(const std::filesystem::path& path) { return read_records(path, decode_chained); }
std::vector<OcrPage> read_ocr_pages(const std::filesystem::path& path) { return read_records(path, decode_ocr_page); }
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  return read_records(path, decode_prediction);
}

}  // namespace cocot::records
