#include "cocot/emitter.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>

#include "cocot/chains.hpp"
#include "cocot/errors.hpp"
#include "cocot/text.hpp"

namespace cocot::emitter {

using records::Json;

std::vector<Stage1Record> decompose(const GroundedSample& gs, const ReasoningChain& chain, std::int64_t target) {
  if (auto v = chains::validate_chain(chain, gs); !v.empty()) {
    throw UsageError("cannot decompose sample " + gs.sample().sample_id() + ": " + v.front());
  }
  const auto chain_text = chains::render_chain(chain, gs);
  const auto& sample = gs.sample();
  std::vector<Stage1Record> out;
  for (const auto& step : chain.steps()) {
    const auto& region = gs.regions()[step.region_index()];
    const auto& b = region.bbox();
    out.push_back(Stage1Record{sample.sample_id(), sample.image_path(), b,
                               geometry::compute_pad_transform(b.width(), b.height(), target), sample.question(),
                               region.description(), chain_text});
  }
  return out;
}

Stage2Record emit_stage2(const GroundedSample& gs, const std::string& chain_text) {
  if (trim(chain_text).empty()) throw UsageError("sample " + gs.sample().sample_id() + ": empty chain text");
  const auto& s = gs.sample();
  if (s.answers().empty() || trim(s.answers().front()).empty()) {
    throw UsageError("sample " + s.sample_id() + ": empty gold answer");
  }
  return Stage2Record{s.sample_id(), s.image_path(), s.question(), chain_text, s.answers().front()};
}

GoldRecord gold_of(const GroundedSample& gs) {
  return GoldRecord{gs.sample().sample_id(), gs.sample().answers(), gs.regions().size()};
}

namespace {

std::string utc_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Json write_manifest(const RunSummary& summary, const TrainingReference& ref) {
  Json counts = Json::object();
  for (const auto& [name, n] : summary.counts) counts[name] = n;

  Json m;
  m["stage"] = summary.stage;
  m["seed"] = summary.seed;
  m["config"] = summary.config.is_null() ? Json::object() : summary.config;
  m["counts"] = counts;
  m["lr_stage1"] = ref.lr_stage1;
  m["lr_stage2"] = ref.lr_stage2;
  m["batch"] = ref.batch;
  m["per_device_batch"] = ref.per_device_batch;
  m["gradient_accumulation_steps"] = ref.gradient_accumulation_steps;
  m["epochs"] = ref.epochs;
  m["image_side"] = ref.image_side;
  m["train_fraction"] = ref.train_fraction;
  m["test_samples"] = ref.test_samples;
  m["created_at"] = utc_timestamp();
  return m;
}

Json encode(const geometry::PadTransform& t) {
  Json j;
  j["scale"] = records::round6(t.scale);
  j["pad_x"] = t.pad_x;
  j["pad_y"] = t.pad_y;
  j["target"] = t.target;
  return j;
}

Json encode(const Stage1Record& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["image_path"] = r.image_path;
  j["region_bbox"] = records::encode(r.region_bbox);
  j["region_crop_transform"] = encode(r.region_crop_transform);
  j["question"] = r.question;
  j["description"] = r.description;
  j["target_chain_text"] = r.target_chain_text;
  return j;
}

Json encode(const Stage2Record& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["image_path"] = r.image_path;
  j["question"] = r.question;
  j["chain_text"] = r.chain_text;
  j["target_answer"] = r.target_answer;
  return j;
}

Json encode(const GoldRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["answers"] = r.answers;
  j["region_count"] = r.region_count;
  return j;
}

namespace {

std::string str(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
    throw DecodeError(std::string("missing or non-string key '") + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

Stage1Record decode_stage1(const Json& j) {
  if (!j.is_object() || !j.contains("region_bbox")) throw DecodeError("missing key 'region_bbox'");
  const auto bbox = records::decode_bbox(j["region_bbox"]);
  Stage1Record r{str(j, "sample_id"), str(j, "image_path"), bbox,
                 geometry::compute_pad_transform(bbox.width(), bbox.height()), str(j, "question"),
                 str(j, "description"), str(j, "target_chain_text")};
  if (j.contains("region_crop_transform")) {
    const auto& t = j["region_crop_transform"];
    if (!t.is_object() || !t.contains("target") || !t["target"].is_number_integer()) {
      throw DecodeError("region_crop_transform needs an integer target");
    }
    r.region_crop_transform = geometry::compute_pad_transform(bbox.width(), bbox.height(), t["target"].get<std::int64_t>());
  }
  if (trim(r.target_chain_text).empty()) throw DecodeError("empty target_chain_text");
  return r;
}

Stage2Record decode_stage2(const Json& j) {
  Stage2Record r{str(j, "sample_id"), str(j, "image_path"), str(j, "question"), str(j, "chain_text"), str(j, "target_answer")};
  if (trim(r.target_answer).empty()) throw DecodeError("empty target_answer");
  return r;
}

GoldRecord decode_gold(const Json& j) {
  GoldRecord g;
  g.sample_id = str(j, "sample_id");
  if (!j.contains("answers") || !j["answers"].is_array() || j["answers"].empty()) throw DecodeError("answers must be a non-empty list");
  for (const auto& a : j["answers"]) {
    if (!a.is_string()) throw DecodeError("answers must hold strings");
    g.answers.push_back(a.get<std::string>());
  }
  if (j.contains("region_count") && j["region_count"].is_number_unsigned()) g.region_count = j["region_count"].get<std::size_t>();
  return g;
}

}  // namespace cocot::emitter
