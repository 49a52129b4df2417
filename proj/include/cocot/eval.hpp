#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cocot/clients.hpp"
#include "cocot/records.hpp"
#include "cocot/types.hpp"

namespace cocot::eval {

struct MatchConfig {
  bool strip_articles = true;
  double numeric_rel_tol = 1e-6;
  int containment_max_gold_tokens = 3;
};

/// Throws ConfigError ("match.*") for a negative tolerance or token cap.
void validate(const MatchConfig& cfg);

/// Lowercases, keeps '.', '-' and '%' only as part of numbers, turns other
/// punctuation into spaces, collapses whitespace and drops one leading article.
std::string normalize_answer(std::string_view a, bool strip_articles = true);

/// Text after the last "answer is" / "answer:" marker up to the end of that
/// sentence, or else the last non-empty line; normalized.
std::string extract_core_answer(std::string_view response, bool strip_articles = true);

/// Parses a normalized answer as a number, ignoring one trailing '%'.
std::optional<double> parse_number(std::string_view normalized);

/// Throws UsageError for an empty gold list.
bool answers_match(std::string_view prediction, const std::vector<std::string>& golds, const MatchConfig& cfg = {});

/// First "[a, b, c, d]" in the response. All values within [0,1] are taken
/// as fractions of the image size; otherwise pixels. Clamped to the image.
/// nullopt when no box can be read or nothing of it lies inside the image.
std::optional<BBox> parse_predicted_bbox(std::string_view response, const std::optional<ImageSize>& size);

/// Runs one inference strategy on one sample and scores it against the
/// sample's gold answers. `chain_text` is required for qwen_rar.
PredictionRecord run_strategy(Strategy strategy, clients::ModelClient& model, const GroundedSample& gs,
                              const std::optional<std::string>& chain_text, const MatchConfig& cfg = {});

/// Re-scores a prediction's raw response against a gold list.
PredictionRecord rescore(PredictionRecord pred, const std::vector<std::string>& golds, const MatchConfig& cfg = {});

struct SampleInfo {
  Dataset dataset = Dataset::gqa;
  std::size_t region_count = 0;
};

using SampleIndex = std::map<std::string, SampleInfo, std::less<>>;

SampleIndex index_of(const std::vector<GroundedSample>& samples);

/// correct / total; accuracy in tenths of a percent, rounded half up.
struct Cell {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::optional<std::int64_t> tenths() const;
};

struct ReportRow {
  std::string dataset;  // a dataset name, or "all" for the pooled row
  Strategy strategy = Strategy::direct;
  Cell single;
  Cell multi;
  Cell overall;
};

struct DeltaRow {
  std::string dataset;
  Strategy strategy = Strategy::direct;
  std::optional<std::int64_t> single;  // tenths of a percentage point
  std::optional<std::int64_t> multi;
  std::optional<std::int64_t> overall;
};

struct AccuracyReport {
  std::vector<ReportRow> rows;
  std::optional<Strategy> baseline;
  std::vector<DeltaRow> deltas;
};

/// Single = region_count 1, Multi = 2 or more, Overall = all, per dataset and
/// strategy plus a pooled "all" row. Predictions without a joined sample
/// throw ReportError listing their ids, as do duplicate (id, strategy)
/// pairs. A baseline with no predictions throws UsageError.
AccuracyReport accuracy_report(const std::vector<PredictionRecord>& preds, const SampleIndex& index,
                               std::optional<Strategy> baseline = std::nullopt);

/// "42.4", or "—" for an empty split.
std::string format_percent(const std::optional<std::int64_t>& tenths);
/// "+15.4", "-0.5", "0.0", or "—".
std::string format_delta(const std::optional<std::int64_t>& tenths);

std::string render_text(const AccuracyReport& report);
records::Json render_json(const AccuracyReport& report);

}  // namespace cocot::eval
