#include "cocot/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "cocot/errors.hpp"
#include "cocot/filter.hpp"
#include "cocot/geometry.hpp"
#include "cocot/prompts.hpp"
#include "cocot/text.hpp"

namespace cocot::grounding {

namespace {

constexpr std::string_view kProposalBody =
    "Question: {question}\n"
    "Task: List every image region needed to answer the question, with a short description of what each region "
    "shows and how it relates to the question.\n"
    "Output format: one line per region, Region N: [x1, y1, x2, y2] description | relation";

std::optional<Region> make_region(const std::vector<double>& v, std::string description, std::string relation,
                                  const std::optional<ImageSize>& size, const std::string& context) {
  if (v.size() != 4 || !std::ranges::all_of(v, [](double x) { return std::isfinite(x); })) {
    log_warning("skipping proposal with malformed box: " + context);
    return std::nullopt;
  }
  description = trim(description);
  if (description.empty()) {
    log_warning("skipping proposal without description: " + context);
    return std::nullopt;
  }
  const bool normalized = std::ranges::all_of(v, [](double x) { return x >= 0.0 && x <= 1.0; });
  try {
    if (size) {
      const double sx = normalized ? static_cast<double>(size->width) : 1.0;
      const double sy = normalized ? static_cast<double>(size->height) : 1.0;
      auto box = geometry::crop_spec(v[0] * sx, v[1] * sy, v[2] * sx, v[3] * sy, size->width, size->height);
      return Region(box, description, RegionSource::model_proposed, trim(relation));
    }
    return Region(make_bbox(v[0], v[1], v[2], v[3]), description, RegionSource::model_proposed, trim(relation));
  } catch (const Error& e) {
    log_warning(std::string("skipping proposal (") + e.what() + "): " + context);
    return std::nullopt;
  }
}

std::vector<Region> parse_json_proposals(const nlohmann::json& doc, const std::optional<ImageSize>& size) {
  const nlohmann::json* list = &doc;
  if (doc.is_object() && doc.contains("regions")) list = &doc["regions"];
  std::vector<Region> out;
  if (!list->is_array()) return out;
  for (const auto& item : *list) {
    const auto context = item.dump();
    if (!item.is_object() || !item.contains("bbox") || !item["bbox"].is_array()) {
      log_warning("skipping proposal without bbox: " + context);
      continue;
    }
    std::vector<double> v;
    for (const auto& x : item["bbox"]) {
      if (x.is_number()) v.push_back(x.get<double>());
      else v.push_back(std::nan(""));
    }
    auto str = [&](const char* k) {
      return item.contains(k) && item[k].is_string() ? item[k].get<std::string>() : std::string{};
    };
    if (auto r = make_region(v, str("description"), str("relation"), size, context)) out.push_back(std::move(*r));
  }
  return out;
}

std::vector<Region> parse_line_proposals(std::string_view text, const std::optional<ImageSize>& size) {
  static const std::regex box_re(R"(\[([^\]]*\d[^\]]*)\])");
  static const std::regex region_prefix(R"(^\s*(?:[-*]\s*)?region\s*\d+\s*[:.)-]?\s*)", std::regex::icase);
  std::vector<Region> out;
  for (const auto& line : split_lines(text)) {
    std::smatch m;
    if (!std::regex_search(line, m, box_re)) continue;
    std::vector<double> values;
    bool bad = false;
    std::string inner = m[1].str();
    std::replace(inner.begin(), inner.end(), ',', ' ');
    std::istringstream nums(inner);
    std::string tok;
    while (nums >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) bad = true;
      } catch (const std::exception&) {
        bad = true;
      }
    }
    if (bad) values.clear();

    std::string rest = m.suffix().str();
    auto first = rest.find_first_not_of(" \t:-,");
    rest = first == std::string::npos ? std::string{} : rest.substr(first);
    if (trim(rest).empty()) rest = std::regex_replace(m.prefix().str(), region_prefix, "");
    std::string relation;
    if (auto bar = rest.find('|'); bar != std::string::npos) {
      relation = rest.substr(bar + 1);
      rest = rest.substr(0, bar);
    }
    if (auto r = make_region(values, rest, relation, size, line)) out.push_back(std::move(*r));
  }
  return out;
}

std::string normalized_word(std::string_view text) { return join(alnum_tokens(text), ""); }

}  // namespace

void validate(const GroundingConfig& cfg) {
  if (!(cfg.similarity_threshold >= 0.0 && cfg.similarity_threshold <= 1.0)) {
    throw ConfigError("grounding.similarity_threshold", "must be in [0,1]");
  }
  if (cfg.max_regions < 1) throw ConfigError("grounding.max_regions", "must be >= 1");
  if (cfg.line_merge_gap_px < 0) throw ConfigError("grounding.line_merge_gap_px", "must be >= 0");
}

std::string proposal_prompt(std::string_view question) {
  return prompts::render_text(kProposalBody, {{"question", std::string(question)}});
}

std::vector<Region> parse_region_proposals(std::string_view response, std::size_t max_regions,
                                           const std::optional<ImageSize>& image_size) {
  const auto body = trim(response);
  // JSON is expected when the response opens an object or a list of objects;
  // a bare "[x1, y1, ...]" opening is the line format.
  bool json_expected = !body.empty() && body.front() == '{';
  if (!body.empty() && body.front() == '[') {
    const auto next = body.find_first_not_of(" \t\r\n", 1);
    json_expected = next != std::string::npos && body[next] == '{';
  }
  std::vector<Region> out;
  if (json_expected) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("region proposal is not valid JSON: ") + e.what(), "regions", std::string(response));
    }
    out = parse_json_proposals(doc, image_size);
  } else {
    out = parse_line_proposals(body, image_size);
  }
  if (out.size() > max_regions) out.erase(out.begin() + static_cast<std::ptrdiff_t>(max_regions), out.end());
  return out;
}

std::vector<Region> propose_regions(clients::ModelClient& model, const Sample& sample, const GroundingConfig& cfg) {
  if (trim(sample.question()).empty()) throw UsageError("cannot propose regions for an empty question");
  clients::ModelRequest req;
  req.prompt = proposal_prompt(sample.question());
  req.image_refs = {clients::image_ref(sample.image_path())};
  const auto response = model.complete(req);
  return parse_region_proposals(response, static_cast<std::size_t>(cfg.max_regions), sample.image_size());
}

std::vector<std::vector<OcrWord>> group_lines(std::vector<OcrWord> words, int gap_px) {
  std::stable_sort(words.begin(), words.end(), [](const OcrWord& a, const OcrWord& b) {
    return std::tuple(a.bbox().center_y(), a.bbox().x1()) < std::tuple(b.bbox().center_y(), b.bbox().x1());
  });
  std::vector<std::vector<OcrWord>> lines;
  double anchor = 0.0;
  for (auto& w : words) {
    if (lines.empty() || w.bbox().center_y() - anchor > gap_px) {
      anchor = w.bbox().center_y();
      lines.emplace_back();
    }
    lines.back().push_back(std::move(w));
  }
  for (auto& line : lines) {
    std::stable_sort(line.begin(), line.end(), [](const OcrWord& a, const OcrWord& b) { return a.bbox().x1() < b.bbox().x1(); });
  }
  return lines;
}

std::string region_text(const OcrPage& page, const BBox& b, int line_merge_gap_px) {
  std::vector<OcrWord> inside;
  for (const auto& w : page.words) {
    if (b.contains_point(w.bbox().center_x(), w.bbox().center_y())) inside.push_back(w);
  }
  std::vector<std::string> lines;
  for (const auto& line : group_lines(std::move(inside), line_merge_gap_px)) {
    std::vector<std::string> texts;
    for (const auto& w : line) texts.push_back(w.text());
    lines.push_back(join(texts, " "));
  }
  return join(lines, "\n");
}

double text_similarity(std::string_view a, std::string_view b) {
  const auto ta = filter::extract_keywords(a);
  const auto tb = filter::extract_keywords(b);
  if (ta.empty() && tb.empty()) return 1.0;
  if (ta.empty() || tb.empty()) return 0.0;
  const std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::optional<BBox> search_better_region(const OcrPage& page, std::string_view description, const GroundingConfig& cfg) {
  const auto lines = group_lines(page.words, cfg.line_merge_gap_px);
  std::optional<BBox> best;
  double best_sim = -1.0;
  for (std::size_t start = 0; start < lines.size(); ++start) {
    std::optional<BBox> box;
    for (std::size_t len = 1; len <= 4 && start + len <= lines.size(); ++len) {
      for (const auto& w : lines[start + len - 1]) box = box ? union_box(*box, w.bbox()) : w.bbox();
      const double sim = text_similarity(region_text(page, *box, cfg.line_merge_gap_px), description);
      const bool better = !best || sim > best_sim ||
                          (sim == best_sim && std::tuple(box->area(), box->y1(), box->x1()) <
                                                  std::tuple(best->area(), best->y1(), best->x1()));
      if (better) {
        best = box;
        best_sim = sim;
      }
    }
  }
  if (best && best_sim >= cfg.similarity_threshold) return best;
  return std::nullopt;
}

Region correct_region(const OcrPage& page, const Region& r, const GroundingConfig& cfg) {
  const double current = text_similarity(region_text(page, r.bbox(), cfg.line_merge_gap_px), r.description());
  if (current >= cfg.similarity_threshold) return r;
  if (auto box = search_better_region(page, r.description(), cfg)) return r.with_bbox(*box, RegionSource::ocr_corrected);
  if (!page.words.empty()) log_warning("no OCR region matches description '" + r.description() + "'; keeping proposal");
  return r;
}

std::vector<Region> fallback_keyword_regions(const OcrPage& page, const std::vector<std::string>& keywords,
                                             const GroundingConfig& cfg) {
  std::vector<Region> out;
  for (const auto& kw : keywords) {
    const auto key = normalized_word(kw);
    if (key.empty()) continue;
    for (const auto& w : page.words) {
      if (normalized_word(w.text()) != key) continue;
      const bool dup = std::ranges::any_of(out, [&](const Region& r) { return geometry::iou(r.bbox(), w.bbox()) > 0.9; });
      if (dup) continue;
      out.emplace_back(w.bbox(), kw, RegionSource::ocr_keyword_fallback);
      if (out.size() >= static_cast<std::size_t>(cfg.max_regions)) return out;
    }
  }
  return out;
}

GroundedSample ground_sample(clients::ModelClient& model, clients::OcrClient& ocr, const Sample& sample,
                             const GroundingConfig& cfg) {
  validate(cfg);
  auto keywords = filter::extract_keywords(sample.question());
  const auto page = ocr.ocr(sample.image_path());

  std::vector<Region> proposals;
  try {
    proposals = propose_regions(model, sample, cfg);
  } catch (const ParseError& e) {
    log_warning("sample " + sample.sample_id() + ": unusable proposal response: " + e.what());
  }

  std::vector<Region> regions;
  for (const auto& p : proposals) {
    auto corrected = correct_region(page, p, cfg);
    if (const auto& size = sample.image_size()) {
      try {
        corrected = corrected.with_bbox(geometry::crop_spec(corrected.bbox(), size->width, size->height), corrected.source());
      } catch (const OutOfBoundsError&) {
        log_warning("sample " + sample.sample_id() + ": dropping region outside the image");
        continue;
      }
    }
    regions.push_back(std::move(corrected));
  }

  if (regions.empty()) {
    for (auto& r : fallback_keyword_regions(page, keywords, cfg)) {
      if (const auto& size = sample.image_size()) {
        if (!r.bbox().within(size->width, size->height)) continue;
      }
      regions.push_back(std::move(r));
    }
  }
  if (regions.empty()) throw GroundingFailed("sample " + sample.sample_id() + ": no usable regions after OCR keyword fallback");
  return GroundedSample(sample, std::move(regions), std::move(keywords));
}

}  // namespace cocot::grounding
