#include "cocot/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

#include "cocot/errors.hpp"
#include "cocot/text.hpp"

namespace cocot {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [value, name] : table) {
    if (value == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Dataset, std::string_view>, 6> kDatasets{{
    {Dataset::gqa, "gqa"},
    {Dataset::docvqa, "docvqa"},
    {Dataset::infovqa, "infovqa"},
    {Dataset::textvqa, "textvqa"},
    {Dataset::visual7w, "visual7w"},
    {Dataset::vqav2, "vqav2"},
}};

constexpr std::array<std::pair<RegionSource, std::string_view>, 3> kSources{{
    {RegionSource::model_proposed, "model_proposed"},
    {RegionSource::ocr_corrected, "ocr_corrected"},
    {RegionSource::ocr_keyword_fallback, "ocr_keyword_fallback"},
}};

constexpr std::array<std::pair<StepRole, std::string_view>, 4> kRoles{{
    {StepRole::keyword_match, "keyword_match"},
    {StepRole::evidence, "evidence"},
    {StepRole::conclusion, "conclusion"},
    {StepRole::direct_answer, "direct_answer"},
}};

constexpr std::array<std::pair<Relation, std::string_view>, 3> kRelations{{
    {Relation::sequential, "sequential"},
    {Relation::parallel, "parallel"},
    {Relation::none, "none"},
}};

constexpr std::array<std::pair<QuestionType, std::string_view>, 2> kQuestionTypes{{
    {QuestionType::sequential, "sequential"},
    {QuestionType::parallel, "parallel"},
}};

constexpr std::array<std::pair<Strategy, std::string_view>, 6> kStrategies{{
    {Strategy::direct, "direct"},
    {Strategy::cocot, "cocot"},
    {Strategy::viscot, "viscot"},
    {Strategy::minus_rar, "minus_rar"},
    {Strategy::replaced_rar, "replaced_rar"},
    {Strategy::qwen_rar, "qwen_rar"},
}};

}  // namespace

std::string_view to_string(Dataset d) { return name_of(kDatasets, d); }
std::string_view to_string(RegionSource s) { return name_of(kSources, s); }
std::string_view to_string(StepRole r) { return name_of(kRoles, r); }
std::string_view to_string(Relation r) { return name_of(kRelations, r); }
std::string_view to_string(QuestionType q) { return name_of(kQuestionTypes, q); }
std::string_view to_string(Strategy s) { return name_of(kStrategies, s); }

std::optional<Dataset> parse_dataset(std::string_view s) { return lookup(kDatasets, s); }
std::optional<RegionSource> parse_region_source(std::string_view s) { return lookup(kSources, s); }
std::optional<StepRole> parse_step_role(std::string_view s) { return lookup(kRoles, s); }
std::optional<Relation> parse_relation(std::string_view s) { return lookup(kRelations, s); }
std::optional<QuestionType> parse_question_type(std::string_view s) { return lookup(kQuestionTypes, s); }
std::optional<Strategy> parse_strategy(std::string_view s) { return lookup(kStrategies, s); }

const std::vector<Dataset>& all_datasets() {
  static const std::vector<Dataset> v = [] {
    std::vector<Dataset> out;
    for (const auto& [d, _] : kDatasets) out.push_back(d);
    return out;
  }();
  return v;
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> v = [] {
    std::vector<Strategy> out;
    for (const auto& [s, _] : kStrategies) out.push_back(s);
    return out;
  }();
  return v;
}

BBox::BBox(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!(x1 < x2) || !(y1 < y2)) {
    throw ConstructionError("degenerate bbox (" + std::to_string(x1) + "," + std::to_string(y1) + "," +
                            std::to_string(x2) + "," + std::to_string(y2) + ")");
  }
}

std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

BBox make_bbox(double x1, double y1, double x2, double y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw ConstructionError("bbox coordinates must be finite");
  }
  auto ix1 = round_half_up(x1), iy1 = round_half_up(y1), ix2 = round_half_up(x2), iy2 = round_half_up(y2);
  if (ix1 > ix2) std::swap(ix1, ix2);
  if (iy1 > iy2) std::swap(iy1, iy2);
  return BBox(ix1, iy1, ix2, iy2);
}

BBox union_box(const BBox& a, const BBox& b) {
  return BBox(std::min(a.x1(), b.x1()), std::min(a.y1(), b.y1()), std::max(a.x2(), b.x2()), std::max(a.y2(), b.y2()));
}

Region::Region(BBox bbox, std::string description, RegionSource source, std::string relation)
    : bbox_(bbox), description_(std::move(description)), source_(source), relation_(std::move(relation)) {
  if (trim(description_).empty()) throw ConstructionError("region description is empty");
}

Sample::Sample(std::string sample_id, Dataset dataset, std::string image_path, std::string question,
               std::vector<std::string> answers, std::optional<ImageSize> image_size)
    : sample_id_(std::move(sample_id)),
      dataset_(dataset),
      image_path_(std::move(image_path)),
      question_(std::move(question)),
      answers_(std::move(answers)),
      image_size_(image_size) {
  if (sample_id_.empty()) throw ConstructionError("sample_id is empty");
  if (answers_.empty()) throw ConstructionError("sample " + sample_id_ + " has no gold answers");
  if (image_path_.empty()) throw ConstructionError("sample " + sample_id_ + " has no image_path");
  if (image_size_ && (image_size_->width <= 0 || image_size_->height <= 0)) {
    throw ConstructionError("sample " + sample_id_ + " has non-positive image size");
  }
}

GroundedSample::GroundedSample(Sample sample, std::vector<Region> regions, std::vector<std::string> keywords)
    : sample_(std::move(sample)), regions_(std::move(regions)), keywords_(std::move(keywords)) {
  if (regions_.empty()) throw ConstructionError("grounded sample " + sample_.sample_id() + " has no regions");
  if (const auto& size = sample_.image_size()) {
    for (const auto& r : regions_) {
      if (!r.bbox().within(size->width, size->height)) {
        throw ConstructionError("region outside image bounds in sample " + sample_.sample_id());
      }
    }
  }
}

OcrWord::OcrWord(std::string text, BBox bbox, double confidence)
    : text_(std::move(text)), bbox_(bbox), confidence_(confidence) {
  if (text_.empty()) throw ConstructionError("OCR word text is empty");
  if (!(confidence_ >= 0.0 && confidence_ <= 1.0)) {
    throw ConstructionError("OCR confidence out of [0,1]: " + std::to_string(confidence_));
  }
}

ReasoningStep::ReasoningStep(std::size_t region_index, StepRole role, std::string reasoning, Relation relation)
    : region_index_(region_index), role_(role), reasoning_(std::move(reasoning)), relation_(relation) {
  if (trim(reasoning_).empty()) throw ConstructionError("reasoning step text is empty");
}

std::vector<std::vector<std::size_t>> branches_of(const std::vector<ReasoningStep>& steps) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i == 0 || steps[i].relation() == Relation::parallel) out.emplace_back();
    out.back().push_back(i);
  }
  return out;
}

std::vector<std::string> chain_violations(const std::vector<ReasoningStep>& steps) {
  std::vector<std::string> out;
  if (steps.empty()) {
    out.emplace_back("chain has no steps");
    return out;
  }
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    if (!seen.insert(s.region_index()).second) out.push_back("region " + std::to_string(s.region_index()) + " repeated");
    if (i == 0) {
      if (s.relation() != Relation::none) out.emplace_back("initial relation must be none");
    } else if (s.relation() == Relation::none) {
      out.push_back("step " + std::to_string(i + 1) + " relation must be sequential or parallel");
    }
  }
  return out;
}

ReasoningChain::ReasoningChain(std::vector<ReasoningStep> steps, QuestionType question_type, bool truncated)
    : steps_(std::move(steps)), question_type_(question_type), truncated_(truncated) {
  if (auto v = chain_violations(steps_); !v.empty()) throw ConstructionError("invalid chain: " + v.front());
  branches_ = branches_of(steps_);
}

}  // namespace cocot
