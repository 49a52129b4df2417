#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cocot/types.hpp"

namespace cocot::filter {

/// Version tag of the embedded stopword list; bump on any edit.
inline constexpr std::string_view kStopwordListVersion = "stopwords-v1";

bool is_stopword(std::string_view token);
std::size_t stopword_count();

/// Lowercased alphanumeric tokens minus stopwords, deduplicated in first-seen order.
std::vector<std::string> extract_keywords(std::string_view question);

/// True iff the answer contains ',' or '/' or the standalone word "and".
bool is_compound_answer(std::string_view answer);

struct FilterRule {
  Dataset dataset = Dataset::gqa;
  int min_keywords_exclusive = 0;  // pass when keyword count is strictly greater
  bool compound_answer_enabled = false;
};

/// Per-dataset complexity thresholds.
FilterRule builtin_rule(Dataset d);

/// Throws UsageError when the rule targets a different dataset.
bool passes_filter(const Sample& sample, const FilterRule& rule);

inline constexpr std::size_t kTestSplitSize = 500;

struct Split {
  std::vector<Sample> test;
  std::vector<Sample> train;
  std::vector<Sample> rest;
};

/// 500 test samples drawn uniformly without replacement, then floor(20%) of
/// the remainder for train. Deterministic in `seed`; output lists keep the
/// input order. Throws UsageError below 500 samples.
Split split_dataset(const std::vector<Sample>& samples, std::uint64_t seed);

/// Fraction of samples grounded to two or more regions. Throws UsageError on empty input.
double multi_region_ratio(const std::vector<GroundedSample>& grounded);

}  // namespace cocot::filter
