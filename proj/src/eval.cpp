#include "cocot/eval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "cocot/chains.hpp"
#include "cocot/errors.hpp"
#include "cocot/geometry.hpp"
#include "cocot/prompts.hpp"
#include "cocot/text.hpp"

namespace cocot::eval {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || u >= 0x80;
}

std::vector<std::string> tokens_of(std::string_view normalized) {
  std::vector<std::string> out;
  std::istringstream in{std::string(normalized)};
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

bool numbers_equal(double a, double b, double rel_tol) {
  if (a == b) return true;
  return std::fabs(a - b) <= rel_tol * std::max(std::fabs(a), std::fabs(b));
}

// Index one past the end of the sentence starting at `from`.
std::size_t sentence_end(std::string_view s, std::size_t from) {
  for (std::size_t i = from; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\n') return i;
    if (c == '.' || c == '!' || c == '?') {
      const bool inside_number = i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) && is_digit(s[i + 1]);
      if (!inside_number) return i;
    }
  }
  return s.size();
}

std::string last_nonempty_line(std::string_view s) {
  const auto lines = split_lines(s);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (!trim(*it).empty()) return *it;
  }
  return {};
}

}  // namespace

void validate(const MatchConfig& cfg) {
  if (!(cfg.numeric_rel_tol >= 0.0)) throw ConfigError("match.numeric_rel_tol", "must be >= 0");
  if (cfg.containment_max_gold_tokens < 0) throw ConfigError("match.containment_max_gold_tokens", "must be >= 0");
}

std::string normalize_answer(std::string_view a, bool strip_articles) {
  static const std::regex spaced_percent(R"((\d)\s+%)");
  std::string s = std::regex_replace(to_lower(a), spaced_percent, "$1%");
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '\'' || c == '`'; }), s.end());

  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool prev_digit = i > 0 && is_digit(s[i - 1]);
    const bool next_digit = i + 1 < s.size() && is_digit(s[i + 1]);
    if (is_word_byte(c)) {
      out += c;
    } else if (c == '.' && prev_digit && next_digit) {
      out += c;
    } else if (c == ',' && prev_digit && next_digit) {
      // thousands separator
    } else if (c == '-' && next_digit) {
      out += c;
    } else if (c == '%' && prev_digit) {
      out += c;
    } else {
      out += ' ';
    }
  }
  auto words = tokens_of(out);
  if (strip_articles && words.size() > 1 && (words[0] == "a" || words[0] == "an" || words[0] == "the")) {
    words.erase(words.begin());
  }
  return join(words, " ");
}

std::string extract_core_answer(std::string_view response, bool strip_articles) {
  const auto lower = to_lower(response);
  std::optional<std::size_t> start;
  for (std::string_view marker : {std::string_view("answer is"), std::string_view("answer:")}) {
    const auto pos = lower.rfind(marker);
    if (pos != std::string::npos && (!start || pos + marker.size() > *start)) start = pos + marker.size();
  }
  if (start) {
    std::string_view rest(response);
    rest.remove_prefix(*start);
    std::string segment(rest.substr(0, sentence_end(rest, 0)));
    auto core = normalize_answer(segment, strip_articles);
    if (core.empty()) {
      // "The answer is:\n42" puts the answer on the next line.
      for (const auto& line : split_lines(rest)) {
        core = normalize_answer(line.substr(0, sentence_end(line, 0)), strip_articles);
        if (!core.empty()) break;
      }
    }
    if (!core.empty()) return core;
  }
  return normalize_answer(last_nonempty_line(response), strip_articles);
}

std::optional<double> parse_number(std::string_view normalized) {
  std::string_view s = normalized;
  if (!s.empty() && s.back() == '%') s.remove_suffix(1);
  if (s.empty() || !(is_digit(s.front()) || s.front() == '-' || s.front() == '.')) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

bool answers_match(std::string_view prediction, const std::vector<std::string>& golds, const MatchConfig& cfg) {
  if (golds.empty()) throw UsageError("answers_match needs at least one gold answer");
  const auto core = extract_core_answer(prediction, cfg.strip_articles);
  const auto full = normalize_answer(prediction, cfg.strip_articles);
  const auto core_tokens = tokens_of(core);
  for (const auto& gold : golds) {
    const auto g = normalize_answer(gold, cfg.strip_articles);
    if (g.empty()) continue;
    const auto gnum = parse_number(g);
    for (const auto& cand : {core, full}) {
      if (cand == g) return true;
      if (gnum) {
        if (auto p = parse_number(cand); p && numbers_equal(*p, *gnum, cfg.numeric_rel_tol)) return true;
      }
    }
    const auto gold_tokens = tokens_of(g);
    if (static_cast<int>(gold_tokens.size()) <= cfg.containment_max_gold_tokens && contains_run(core_tokens, gold_tokens)) {
      return true;
    }
  }
  return false;
}

std::optional<BBox> parse_predicted_bbox(std::string_view response, const std::optional<ImageSize>& size) {
  static const std::regex box_re(
      R"(\[\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\])");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(response.begin(), response.end(), m, box_re)) return std::nullopt;
  double v[4];
  for (int i = 0; i < 4; ++i) v[i] = std::stod(m[i + 1].str());
  const bool normalized = std::all_of(std::begin(v), std::end(v), [](double x) { return x >= 0.0 && x <= 1.0; });
  try {
    if (!size) {
      if (normalized) return std::nullopt;
      return make_bbox(v[0], v[1], v[2], v[3]);
    }
    const double sx = normalized ? static_cast<double>(size->width) : 1.0;
    const double sy = normalized ? static_cast<double>(size->height) : 1.0;
    return geometry::crop_spec(v[0] * sx, v[1] * sy, v[2] * sx, v[3] * sy, size->width, size->height);
  } catch (const Error&) {
    return std::nullopt;
  }
}

PredictionRecord rescore(PredictionRecord pred, const std::vector<std::string>& golds, const MatchConfig& cfg) {
  pred.extracted_answer = extract_core_answer(pred.raw_response, cfg.strip_articles);
  pred.correct = !pred.bbox_parse_failed && answers_match(pred.raw_response, golds, cfg);
  return pred;
}

PredictionRecord run_strategy(Strategy strategy, clients::ModelClient& model, const GroundedSample& gs,
                              const std::optional<std::string>& chain_text, const MatchConfig& cfg) {
  using prompts::TemplateId;
  const auto& sample = gs.sample();
  const auto& regions = gs.regions();
  const auto image = clients::image_ref(sample.image_path());
  auto ask = [&](TemplateId id, const prompts::Bindings& b, std::vector<std::string> refs) {
    clients::ModelRequest req;
    req.prompt = prompts::render(id, b);
    req.image_refs = std::move(refs);
    return model.complete(req);
  };

  PredictionRecord pred;
  pred.sample_id = sample.sample_id();
  pred.strategy = strategy;
  pred.region_count = regions.size();

  switch (strategy) {
    case Strategy::direct:
      pred.raw_response = ask(TemplateId::infer_direct, {{"question", sample.question()}}, {image});
      break;
    case Strategy::cocot: {
      std::vector<std::string> parts;
      for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto resp = ask(TemplateId::infer_cocot_stage1,
                              {{"description", chains::region_content(regions[i])}, {"question", sample.question()}},
                              {image, clients::image_ref(sample.image_path(), regions[i].bbox())});
        parts.push_back("Region " + std::to_string(i) + ": " + trim(resp));
      }
      pred.raw_response = ask(TemplateId::infer_cocot_stage2,
                              {{"question", sample.question()}, {"chain_context", join(parts, "; ")}}, {image});
      break;
    }
    case Strategy::viscot: {
      const auto resp = ask(TemplateId::infer_viscot_stage1, {{"question", sample.question()}}, {image});
      const auto box = parse_predicted_bbox(resp, sample.image_size());
      if (!box) {
        log_warning("sample " + sample.sample_id() + ": no usable bounding box in viscot response");
        pred.raw_response = resp;
        pred.bbox_parse_failed = true;
        break;
      }
      pred.raw_response = ask(TemplateId::infer_viscot_stage2, {{"question", sample.question()}},
                              {clients::image_ref(sample.image_path(), *box)});
      break;
    }
    case Strategy::minus_rar: {
      std::vector<std::string> parts;
      for (std::size_t i = 0; i < regions.size(); ++i) parts.push_back(chains::describe_region(i, regions[i]));
      pred.raw_response = ask(TemplateId::infer_minus_rar,
                              {{"description", join(parts, "; ")}, {"question", sample.question()}}, {image});
      break;
    }
    case Strategy::replaced_rar: {
      std::vector<std::string> parts;
      for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& rel = regions[i].relation();
        parts.push_back("Region " + std::to_string(i) + " (" + (rel.empty() ? std::string("unspecified") : rel) +
                        "): " + chains::region_content(regions[i]));
      }
      pred.raw_response = ask(TemplateId::infer_replaced_rar,
                              {{"content_relation", join(parts, "; ")}, {"question", sample.question()}}, {image});
      break;
    }
    case Strategy::qwen_rar:
      if (!chain_text || trim(*chain_text).empty()) {
        throw UsageError("sample " + sample.sample_id() + ": qwen_rar needs a reasoning chain");
      }
      pred.raw_response = ask(TemplateId::infer_qwen_rar,
                              {{"chain_text", *chain_text}, {"question", sample.question()}}, {image});
      break;
  }
  return rescore(std::move(pred), sample.answers(), cfg);
}

SampleIndex index_of(const std::vector<GroundedSample>& samples) {
  SampleIndex out;
  for (const auto& g : samples) out[g.sample().sample_id()] = SampleInfo{g.sample().dataset(), g.regions().size()};
  return out;
}

std::optional<std::int64_t> Cell::tenths() const {
  if (total == 0) return std::nullopt;
  const auto c = static_cast<std::int64_t>(correct), t = static_cast<std::int64_t>(total);
  return (2000 * c + t) / (2 * t);
}

AccuracyReport accuracy_report(const std::vector<PredictionRecord>& preds, const SampleIndex& index,
                               std::optional<Strategy> baseline) {
  std::vector<std::string> missing;
  std::set<std::pair<std::string, Strategy>> seen;
  std::vector<std::string> duplicates;
  for (const auto& p : preds) {
    if (!index.contains(p.sample_id)) missing.push_back(p.sample_id);
    if (!seen.emplace(p.sample_id, p.strategy).second) duplicates.push_back(p.sample_id);
  }
  if (!missing.empty()) throw ReportError("predictions without a grounded sample: " + join(missing, ", "), missing);
  if (!duplicates.empty()) {
    throw ReportError("duplicate predictions for one strategy: " + join(duplicates, ", "), duplicates);
  }

  // key: (dataset name or "all", strategy)
  std::map<std::pair<std::string, Strategy>, ReportRow> cells;
  auto tally = [&](const std::string& ds, const PredictionRecord& p, std::size_t regions) {
    auto& row = cells[{ds, p.strategy}];
    row.dataset = ds;
    row.strategy = p.strategy;
    Cell& split = regions >= 2 ? row.multi : row.single;
    for (Cell* c : {&split, &row.overall}) {
      ++c->total;
      if (p.correct) ++c->correct;
    }
  };
  for (const auto& p : preds) {
    const auto& info = index.find(p.sample_id)->second;
    tally(std::string(to_string(info.dataset)), p, info.region_count);
    tally("all", p, info.region_count);
  }

  std::vector<std::string> dataset_order;
  for (auto d : all_datasets()) dataset_order.emplace_back(to_string(d));
  dataset_order.emplace_back("all");

  AccuracyReport report;
  report.baseline = baseline;
  for (const auto& ds : dataset_order) {
    for (auto s : all_strategies()) {
      if (auto it = cells.find({ds, s}); it != cells.end()) report.rows.push_back(it->second);
    }
  }

  if (baseline) {
    if (!cells.contains({"all", *baseline})) {
      throw UsageError("baseline strategy " + std::string(to_string(*baseline)) + " has no predictions");
    }
    auto diff = [](const Cell& a, const Cell* b) -> std::optional<std::int64_t> {
      if (!b) return std::nullopt;
      auto x = a.tenths(), y = b->tenths();
      if (!x || !y) return std::nullopt;
      return *x - *y;
    };
    for (const auto& row : report.rows) {
      if (row.strategy == *baseline) continue;
      const auto it = cells.find({row.dataset, *baseline});
      const ReportRow* base = it == cells.end() ? nullptr : &it->second;
      report.deltas.push_back(DeltaRow{row.dataset, row.strategy, diff(row.single, base ? &base->single : nullptr),
                                       diff(row.multi, base ? &base->multi : nullptr),
                                       diff(row.overall, base ? &base->overall : nullptr)});
    }
  }
  return report;
}

std::string format_percent(const std::optional<std::int64_t>& tenths) {
  if (!tenths) return "—";
  return std::to_string(*tenths / 10) + "." + std::to_string(*tenths % 10);
}

std::string format_delta(const std::optional<std::int64_t>& tenths) {
  if (!tenths) return "—";
  if (*tenths == 0) return "0.0";
  const auto mag = *tenths < 0 ? -*tenths : *tenths;
  return (*tenths > 0 ? "+" : "-") + format_percent(mag);
}

namespace {

std::size_t display_width(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string pad(std::string_view s, std::size_t width, bool right_align) {
  const auto w = display_width(s);
  const std::string fill(w < width ? width - w : 0, ' ');
  return right_align ? fill + std::string(s) : std::string(s) + fill;
}

std::string table(const std::vector<std::array<std::string, 5>>& rows) {
  std::array<std::size_t, 5> widths{};
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < 5; ++i) widths[i] = std::max(widths[i], display_width(r[i]));
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < 5; ++i) {
      if (i) line += "  ";
      line += pad(r[i], widths[i], i >= 2);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

records::Json cell_json(const Cell& c) {
  records::Json j;
  j["correct"] = c.correct;
  j["total"] = c.total;
  const auto t = c.tenths();
  j["accuracy"] = t ? records::Json(records::round6(static_cast<double>(*t) / 10.0)) : records::Json(nullptr);
  return j;
}

records::Json delta_json(const std::optional<std::int64_t>& t) {
  return t ? records::Json(records::round6(static_cast<double>(*t) / 10.0)) : records::Json(nullptr);
}

}  // namespace

std::string render_text(const AccuracyReport& report) {
  std::vector<std::array<std::string, 5>> acc{{"dataset", "strategy", "Single", "Multi", "Overall"}};
  for (const auto& r : report.rows) {
    acc.push_back({r.dataset, std::string(to_string(r.strategy)), format_percent(r.single.tenths()),
                   format_percent(r.multi.tenths()), format_percent(r.overall.tenths())});
  }
  std::string out = "Accuracy (%)\n" + table(acc);
  if (report.baseline) {
    std::vector<std::array<std::string, 5>> delta{{"dataset", "strategy", "Single", "Multi", "Overall"}};
    for (const auto& d : report.deltas) {
      delta.push_back({d.dataset, std::string(to_string(d.strategy)), format_delta(d.single), format_delta(d.multi),
                       format_delta(d.overall)});
    }
    out += "\nDelta vs " + std::string(to_string(*report.baseline)) + " (percentage points)\n" + table(delta);
  }
  return out;
}

records::Json render_json(const AccuracyReport& report) {
  records::Json rows = records::Json::array();
  for (const auto& r : report.rows) {
    records::Json j;
    j["dataset"] = r.dataset;
    j["strategy"] = to_string(r.strategy);
    j["single"] = cell_json(r.single);
    j["multi"] = cell_json(r.multi);
    j["overall"] = cell_json(r.overall);
    rows.push_back(std::move(j));
  }
  records::Json out;
  out["rows"] = std::move(rows);
  out["baseline"] = report.baseline ? records::Json(to_string(*report.baseline)) : records::Json(nullptr);
  records::Json deltas = records::Json::array();
  for (const auto& d : report.deltas) {
    records::Json j;
    j["dataset"] = d.dataset;
    j["strategy"] = to_string(d.strategy);
    j["single"] = delta_json(d.single);
    j["multi"] = delta_json(d.multi);
    j["overall"] = delta_json(d.overall);
    deltas.push_back(std::move(j));
  }
  out["deltas"] = std::move(deltas);
  return out;
}

}  // namespace cocot::eval
