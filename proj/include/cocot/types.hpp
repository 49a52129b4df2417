#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cocot {

enum class Dataset { gqa, docvqa, infovqa, textvqa, visual7w, vqav2 };
enum class RegionSource { model_proposed, ocr_corrected, ocr_keyword_fallback };
enum class StepRole { keyword_match, evidence, conclusion, direct_answer };
enum class Relation { sequential, parallel, none };
enum class QuestionType { sequential, parallel };
enum class Strategy { direct, cocot, viscot, minus_rar, replaced_rar, qwen_rar };

std::string_view to_string(Dataset d);
std::string_view to_string(RegionSource s);
std::string_view to_string(StepRole r);
std::string_view to_string(Relation r);
std::string_view to_string(QuestionType q);
std::string_view to_string(Strategy s);

// Parsers are exact (lowercase tokens as produced by to_string); they return
// nullopt for anything else. Lenient model-output parsing lives in chains.
std::optional<Dataset> parse_dataset(std::string_view s);
std::optional<RegionSource> parse_region_source(std::string_view s);
std::optional<StepRole> parse_step_role(std::string_view s);
std::optional<Relation> parse_relation(std::string_view s);
std::optional<QuestionType> parse_question_type(std::string_view s);
std::optional<Strategy> parse_strategy(std::string_view s);

const std::vector<Dataset>& all_datasets();
const std::vector<Strategy>& all_strategies();

/// Axis-aligned box in original-image pixels. Always non-degenerate.
class BBox {
 public:
  /// Throws ConstructionError unless x1 < x2 and y1 < y2.
  BBox(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2);

  std::int64_t x1() const { return x1_; }
  std::int64_t y1() const { return y1_; }
  std::int64_t x2() const { return x2_; }
  std::int64_t y2() const { return y2_; }
  std::int64_t width() const { return x2_ - x1_; }
  std::int64_t height() const { return y2_ - y1_; }
  std::int64_t area() const { return width() * height(); }
  double center_x() const { return 0.5 * static_cast<double>(x1_ + x2_); }
  double center_y() const { return 0.5 * static_cast<double>(y1_ + y2_); }

  bool contains_point(double x, double y) const { return x >= x1_ && x <= x2_ && y >= y1_ && y <= y2_; }
  bool contains(const BBox& o) const { return o.x1_ >= x1_ && o.y1_ >= y1_ && o.x2_ <= x2_ && o.y2_ <= y2_; }
  bool within(std::int64_t width, std::int64_t height) const {
    return x1_ >= 0 && y1_ >= 0 && x2_ <= width && y2_ <= height;
  }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  std::int64_t x1_, y1_, x2_, y2_;
};

/// Rounds half-up to integer pixels and swaps reversed corners before validating.
/// Throws ConstructionError for non-finite input or zero area.
BBox make_bbox(double x1, double y1, double x2, double y2);

/// Smallest box covering both.
BBox union_box(const BBox& a, const BBox& b);

/// Round half-up, the single rounding rule for pixel coordinates.
std::int64_t round_half_up(double v);

class Region {
 public:
  Region(BBox bbox, std::string description, RegionSource source = RegionSource::model_proposed,
         std::string relation = {});

  const BBox& bbox() const { return bbox_; }
  const std::string& description() const { return description_; }
  RegionSource source() const { return source_; }
  // Free-text relation to the question, when the proposer supplied one.
  const std::string& relation() const { return relation_; }

  Region with_bbox(BBox b, RegionSource s) const { return Region(b, description_, s, relation_); }

  friend bool operator==(const Region&, const Region&) = default;

 private:
  BBox bbox_;
  std::string description_;
  RegionSource source_;
  std::string relation_;
};

struct ImageSize {
  std::int64_t width = 0;
  std::int64_t height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

class Sample {
 public:
  Sample(std::string sample_id, Dataset dataset, std::string image_path, std::string question,
         std::vector<std::string> answers, std::optional<ImageSize> image_size = std::nullopt);

  const std::string& sample_id() const { return sample_id_; }
  Dataset dataset() const { return dataset_; }
  const std::string& image_path() const { return image_path_; }
  const std::string& question() const { return question_; }
  const std::vector<std::string>& answers() const { return answers_; }
  const std::optional<ImageSize>& image_size() const { return image_size_; }

  friend bool operator==(const Sample&, const Sample&) = default;

 private:
  std::string sample_id_;
  Dataset dataset_;
  std::string image_path_;
  std::string question_;
  std::vector<std::string> answers_;
  std::optional<ImageSize> image_size_;
};

class GroundedSample {
 public:
  /// Requires at least one region; regions must sit inside the image when its size is known.
  GroundedSample(Sample sample, std::vector<Region> regions, std::vector<std::string> keywords);

  const Sample& sample() const { return sample_; }
  const std::vector<Region>& regions() const { return regions_; }
  const std::vector<std::string>& keywords() const { return keywords_; }

  friend bool operator==(const GroundedSample&, const GroundedSample&) = default;

 private:
  Sample sample_;
  std::vector<Region> regions_;
  std::vector<std::string> keywords_;
};

class OcrWord {
 public:
  OcrWord(std::string text, BBox bbox, double confidence = 1.0);

  const std::string& text() const { return text_; }
  const BBox& bbox() const { return bbox_; }
  double confidence() const { return confidence_; }

  friend bool operator==(const OcrWord&, const OcrWord&) = default;

 private:
  std::string text_;
  BBox bbox_;
  double confidence_;
};

struct OcrPage {
  std::string image_path;
  std::vector<OcrWord> words;
  friend bool operator==(const OcrPage&, const OcrPage&) = default;
};

class ReasoningStep {
 public:
  ReasoningStep(std::size_t region_index, StepRole role, std::string reasoning, Relation relation);

  std::size_t region_index() const { return region_index_; }
  StepRole role() const { return role_; }
  const std::string& reasoning() const { return reasoning_; }
  Relation relation() const { return relation_; }

  ReasoningStep with_relation(Relation r) const { return ReasoningStep(region_index_, role_, reasoning_, r); }

  friend bool operator==(const ReasoningStep&, const ReasoningStep&) = default;

 private:
  std::size_t region_index_;
  StepRole role_;
  std::string reasoning_;
  Relation relation_;
};

/// Branch structure is derived from the step relations: a parallel step opens
/// a new branch, a sequential step extends the current one.
class ReasoningChain {
 public:
  /// Throws ConstructionError when the steps violate the relation or
  /// uniqueness invariants (see chain_violations).
  ReasoningChain(std::vector<ReasoningStep> steps, QuestionType question_type, bool truncated = false);

  const std::vector<ReasoningStep>& steps() const { return steps_; }
  const std::vector<std::vector<std::size_t>>& branches() const { return branches_; }
  QuestionType question_type() const { return question_type_; }
  bool truncated() const { return truncated_; }

  friend bool operator==(const ReasoningChain&, const ReasoningChain&) = default;

 private:
  std::vector<ReasoningStep> steps_;
  std::vector<std::vector<std::size_t>> branches_;
  QuestionType question_type_;
  bool truncated_;
};

/// Structural violations of a step list, independent of any GroundedSample.
std::vector<std::string> chain_violations(const std::vector<ReasoningStep>& steps);

/// Partition of step positions into branches implied by the relations.
std::vector<std::vector<std::size_t>> branches_of(const std::vector<ReasoningStep>& steps);

/// A grounded sample with its built chain and the chain's rendered text.
struct ChainedSample {
  GroundedSample grounded;
  ReasoningChain chain;
  std::string chain_text;
  friend bool operator==(const ChainedSample&, const ChainedSample&) = default;
};

/// A sample a stage could not process; written to the stage's reject file.
struct RejectRecord {
  std::string sample_id;
  std::string stage;
  std::string reason;
  friend bool operator==(const RejectRecord&, const RejectRecord&) = default;
};

struct PredictionRecord {
  std::string sample_id;
  Strategy strategy = Strategy::direct;
  std::string raw_response;
  std::string extracted_answer;
  bool correct = false;
  std::size_t region_count = 0;
  bool bbox_parse_failed = false;
  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

}  // namespace cocot
