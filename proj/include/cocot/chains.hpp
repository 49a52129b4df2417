#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cocot/clients.hpp"
#include "cocot/types.hpp"

namespace cocot::chains {

struct ChainBuilderConfig {
  std::optional<int> max_steps;    // defaults to the region count
  bool require_exploration = true; // ask the model to visit most regions before concluding
};

void validate(const ChainBuilderConfig& cfg);

/// Lenient one-word parse; anything other than a clear "sequential" or
/// "parallel" yields nullopt.
std::optional<QuestionType> parse_question_type_answer(std::string_view response);

/// Asks the model once per sample. Unparseable answers fall back to
/// sequential with a warning.
QuestionType classify_question_type(clients::ModelClient& model, const Sample& sample,
                                    const std::vector<std::string>& keywords);

/// Parses "SELECTED_REGION: Region N, ROLE: r, REASONING: text, RELATIONSHIP: rel".
/// Labels are case-insensitive; fields may be separated by commas or newlines
/// and values may be wrapped in brackets. Throws ParseError whose `field` names
/// the missing or invalid label, or RangeError for an index >= region_count.
ReasoningStep parse_step_output(std::string_view text, std::size_t region_count);

/// Runs the region-selection loop against the model. See README for the
/// termination and retry rules. Throws UsageError without regions and
/// ChainFailed when the first step cannot be obtained.
ReasoningChain build_chain(clients::ModelClient& model, const GroundedSample& gs, const ChainBuilderConfig& cfg = {});

/// Letter label for a step position: 0 -> A, 25 -> Z, 26 -> AA.
std::string step_letter(std::size_t position);

/// "Step i [Region r, role]: reasoning" lines, a blank line between branches,
/// then "Chain: A→B, C→D".
std::string render_chain(const ReasoningChain& chain, const GroundedSample& gs);

/// Empty when every chain invariant holds for `gs`.
std::vector<std::string> validate_chain(const std::vector<ReasoningStep>& steps, const GroundedSample& gs);
std::vector<std::string> validate_chain(const ReasoningChain& chain, const GroundedSample& gs);

/// "description [x1, y1, x2, y2]"
std::string region_content(const Region& r);
/// "Region i: description [x1, y1, x2, y2]" as shown to the model.
std::string describe_region(std::size_t index, const Region& r);

}  // namespace cocot::chains
