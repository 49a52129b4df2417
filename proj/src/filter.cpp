#include "cocot/filter.hpp"

#include <algorithm>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <regex>
#include <unordered_set>

#include "cocot/errors.hpp"
#include "cocot/text.hpp"

namespace cocot::filter {

namespace {

// Common English function words. Content words ("many", "color", "left") are
// deliberately absent: they carry the question's substance.
constexpr std::string_view kStopwords[] = {
    "a",       "about",   "above",      "after",    "again",  "against", "all",     "am",         "an",
    "and",     "any",     "are",        "as",       "at",     "be",      "because", "been",       "before",
    "being",   "below",   "between",    "both",     "but",    "by",      "can",     "could",      "did",
    "do",      "does",    "doing",      "down",     "during", "each",    "few",     "for",        "from",
    "further", "had",     "has",        "have",     "having", "he",      "her",     "here",       "hers",
    "herself", "him",     "himself",    "his",      "how",    "i",       "if",      "in",         "into",
    "is",      "it",      "its",        "itself",   "just",   "me",      "more",    "most",       "my",
    "myself",  "no",      "nor",        "not",      "now",    "of",      "off",     "on",         "once",
    "only",    "or",      "other",      "our",      "ours",   "ourselves", "out",   "over",       "own",
    "same",    "she",     "should",     "so",       "some",   "such",    "than",    "that",       "the",
    "their",   "theirs",  "them",       "themselves", "then", "there",   "these",   "they",       "this",
    "those",   "through", "to",         "too",      "under",  "until",   "up",      "very",       "was",
    "we",      "were",    "what",       "when",     "where",  "which",   "while",   "who",        "whom",
    "why",     "will",    "with",       "would",    "you",    "your",    "yours",   "yourself",   "yourselves",
    "s",       "t"};

const std::unordered_set<std::string_view>& stopword_set() {
  static const std::unordered_set<std::string_view> set(std::begin(kStopwords), std::end(kStopwords));
  return set;
}

// Unbiased draw in [0, bound) independent of the standard library's
// distribution implementations, so splits are identical across toolchains.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

bool is_stopword(std::string_view token) { return stopword_set().contains(token); }

std::size_t stopword_count() { return stopword_set().size(); }

std::vector<std::string> extract_keywords(std::string_view question) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& tok : alnum_tokens(question)) {
    if (is_stopword(tok)) continue;
    if (seen.insert(tok).second) out.push_back(std::move(tok));
  }
  return out;
}

bool is_compound_answer(std::string_view answer) {
  if (answer.find(',') != std::string_view::npos || answer.find('/') != std::string_view::npos) return true;
  static const std::regex and_word(R"(\band\b)", std::regex::icase);
  return std::regex_search(answer.begin(), answer.end(), and_word);
}

FilterRule builtin_rule(Dataset d) {
  switch (d) {
    case Dataset::gqa: return {d, 6, false};
    case Dataset::docvqa: return {d, 4, true};
    case Dataset::infovqa: return {d, 4, true};
    case Dataset::textvqa: return {d, 3, true};
    case Dataset::visual7w: return {d, 3, true};
    case Dataset::vqav2: return {d, 5, true};
  }
  throw UsageError("unknown dataset");
}

bool passes_filter(const Sample& sample, const FilterRule& rule) {
  if (sample.dataset() != rule.dataset) {
    throw UsageError("rule for " + std::string(to_string(rule.dataset)) + " applied to " +
                     std::string(to_string(sample.dataset())) + " sample " + sample.sample_id());
  }
  if (rule.min_keywords_exclusive < 0) throw UsageError("min_keywords_exclusive must be >= 0");
  const auto count = static_cast<long long>(extract_keywords(sample.question()).size());
  if (count > rule.min_keywords_exclusive) return true;
  if (!rule.compound_answer_enabled) return false;
  return std::ranges::any_of(sample.answers(), [](const std::string& a) { return is_compound_answer(a); });
}

Split split_dataset(const std::vector<Sample>& samples, std::uint64_t seed) {
  const std::size_t n = samples.size();
  if (n < kTestSplitSize) {
    throw UsageError("split needs at least " + std::to_string(kTestSplitSize) + " samples, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: positions [0, k) end up holding a uniform k-subset.
  const std::size_t train_size = (n - kTestSplitSize) / 5;
  const std::size_t drawn = kTestSplitSize + train_size;
  for (std::size_t i = 0; i < drawn && i + 1 < n; ++i) {
    std::swap(order[i], order[i + bounded(rng, n - i)]);
  }

  std::vector<int> bucket(n, 2);
  for (std::size_t i = 0; i < drawn; ++i) bucket[order[i]] = i < kTestSplitSize ? 0 : 1;

  Split out;
  out.test.reserve(kTestSplitSize);
  out.train.reserve(train_size);
  out.rest.reserve(n - drawn);
  for (std::size_t i = 0; i < n; ++i) {
    (bucket[i] == 0 ? out.test : bucket[i] == 1 ? out.train : out.rest).push_back(samples[i]);
  }
  return out;
}

double multi_region_ratio(const std::vector<GroundedSample>& grounded) {
  if (grounded.empty()) throw UsageError("multi_region_ratio of an empty list");
  const auto multi = std::ranges::count_if(grounded, [](const GroundedSample& g) { return g.regions().size() >= 2; });
  return static_cast<double>(multi) / static_cast<double>(grounded.size());
}

}  // namespace cocot::filter
