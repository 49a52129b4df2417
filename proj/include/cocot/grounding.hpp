#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cocot/clients.hpp"
#include "cocot/types.hpp"

namespace cocot::grounding {

struct GroundingConfig {
  double similarity_threshold = 0.5;
  int max_regions = 8;
  int line_merge_gap_px = 6;
};

/// Throws ConfigError on out-of-range fields.
void validate(const GroundingConfig& cfg);

/// Instruction sent to the model to propose regions for a question.
std::string proposal_prompt(std::string_view question);

/// Lenient parse of a proposal response. Accepts a JSON list of
/// {"bbox": [x1,y1,x2,y2], "description": ..., "relation"?: ...} objects or
/// one "Region N: [x1, y1, x2, y2] description | relation" entry per line.
/// Malformed entries are skipped with a warning. Boxes whose values are all
/// <= 1 are taken as normalized when the image size is known, and boxes are
/// clamped to the image. Throws ParseError (raw text attached) when the
/// response looks like JSON but does not parse.
std::vector<Region> parse_region_proposals(std::string_view response, std::size_t max_regions,
                                           const std::optional<ImageSize>& image_size = std::nullopt);

/// Asks the model for regions (source = model_proposed), truncated to max_regions.
std::vector<Region> propose_regions(clients::ModelClient& model, const Sample& sample, const GroundingConfig& cfg = {});

/// OCR words grouped into reading-order lines: a word joins the current line
/// when its vertical centre is within `gap_px` of the line's first word.
std::vector<std::vector<OcrWord>> group_lines(std::vector<OcrWord> words, int gap_px);

/// Text of the words whose centre lies inside `b`, lines joined by '\n' and
/// words within a line by ' '.
std::string region_text(const OcrPage& page, const BBox& b, int line_merge_gap_px = 6);

/// Jaccard similarity over keyword tokens; 1 when both sides are empty.
double text_similarity(std::string_view a, std::string_view b);

/// Best window of 1..4 consecutive OCR lines by similarity to `description`,
/// if it reaches the threshold. Ties prefer smaller area, then top, then left.
std::optional<BBox> search_better_region(const OcrPage& page, std::string_view description, const GroundingConfig& cfg = {});

/// Keeps a region whose OCR content matches its description, otherwise moves
/// it to a better-matching OCR window (source = ocr_corrected) when one exists.
Region correct_region(const OcrPage& page, const Region& r, const GroundingConfig& cfg = {});

/// One region per OCR word equal to a keyword (case-insensitive), deduplicated
/// at IoU > 0.9 and truncated to max_regions.
std::vector<Region> fallback_keyword_regions(const OcrPage& page, const std::vector<std::string>& keywords,
                                             const GroundingConfig& cfg = {});

/// Proposal, OCR correction, then keyword fallback. Throws GroundingFailed when
/// no region survives.
GroundedSample ground_sample(clients::ModelClient& model, clients::OcrClient& ocr, const Sample& sample,
                             const GroundingConfig& cfg = {});

}  // namespace cocot::grounding
