#include "cocot/chains.hpp"

#include <algorithm>
#include <regex>

#include "cocot/errors.hpp"
#include "cocot/prompts.hpp"
#include "cocot/text.hpp"

namespace cocot::chains {

namespace {

std::string strip_value(std::string_view v) {
  auto s = trim(v);
  // trailing separators left over from comma-separated layouts
  while (!s.empty() && (s.back() == ',' || s.back() == ';')) s = trim(s.substr(0, s.size() - 1));
  // markdown emphasis: "**Region 1**"
  while (!s.empty() && s.front() == '*') s = trim(s.substr(1));
  while (!s.empty() && s.back() == '*') s = trim(s.substr(0, s.size() - 1));
  while (s.size() >= 2 && ((s.front() == '[' && s.back() == ']') || (s.front() == '"' && s.back() == '"'))) {
    s = trim(s.substr(1, s.size() - 2));
  }
  return s;
}

// "keyword match." -> "keyword_match"
std::string enum_token(std::string_view v) {
  std::string out;
  for (char c : to_lower(strip_value(v))) {
    if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    else if ((c == ' ' || c == '_' || c == '-') && !out.empty() && out.back() != '_') out += '_';
    else if (!out.empty()) break;
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string image_crop(const Sample& s, const Region& r) { return clients::image_ref(s.image_path(), r.bbox()); }

std::string role_instruction(bool first, QuestionType qt, const ChainBuilderConfig& cfg) {
  if (first) {
    return "Select the region that best matches the question keywords as the entry point (ROLE: keyword_match, "
           "RELATIONSHIP: none).";
  }
  std::string s =
      "Select the next most relevant region and decide whether it continues the current reasoning (sequential) or "
      "starts an independent branch (parallel). Use ROLE: conclusion once the question can be answered.";
  if (qt == QuestionType::parallel) s += " For parallel questions, prefer regions in similar positions (same row or column).";
  if (cfg.require_exploration) s += " Explore most regions before concluding.";
  return s;
}

std::string previous_steps_text(const std::vector<ReasoningStep>& steps) {
  if (steps.empty()) return "none";
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    parts.push_back("Step " + std::to_string(i + 1) + ": Region " + std::to_string(s.region_index()) + " (" +
                    std::string(to_string(s.role())) + ", " + std::string(to_string(s.relation())) + ") " + s.reasoning());
  }
  return join(parts, "; ");
}

std::string retry_prompt(const std::string& prompt, const std::string& error) {
  return prompt + "\nYour previous answer could not be used (" + error +
         "). Reply again using exactly the output format above.";
}

}  // namespace

void validate(const ChainBuilderConfig& cfg) {
  if (cfg.max_steps && *cfg.max_steps < 1) throw ConfigError("chain.max_steps", "must be >= 1");
}

std::optional<QuestionType> parse_question_type_answer(std::string_view response) {
  bool seq = false, par = false;
  for (const auto& tok : alnum_tokens(response)) {
    seq = seq || tok == "sequential";
    par = par || tok == "parallel";
  }
  if (seq == par) return std::nullopt;
  return seq ? QuestionType::sequential : QuestionType::parallel;
}

QuestionType classify_question_type(clients::ModelClient& model, const Sample& sample,
                                    const std::vector<std::string>& keywords) {
  if (trim(sample.question()).empty()) throw UsageError("cannot classify an empty question");
  clients::ModelRequest req;
  req.prompt = prompts::render(prompts::TemplateId::classify_question_type,
                               {{"question", sample.question()}, {"keywords", join(keywords, ", ")}});
  req.image_refs = {clients::image_ref(sample.image_path())};
  const auto response = model.complete(req);
  if (auto qt = parse_question_type_answer(response)) return *qt;
  log_warning("sample " + sample.sample_id() + ": ambiguous question type '" + trim(response) + "', using sequential");
  return QuestionType::sequential;
}

ReasoningStep parse_step_output(std::string_view text, std::size_t region_count) {
  if (region_count < 1) throw UsageError("parse_step_output needs region_count >= 1");
  static const std::regex label_re(
      R"((?:^|[,;\n])[\s*\[]*(selected[ _]?region|role|reasoning|relationship)[\s*\]]*:\**)", std::regex::icase);

  struct Hit {
    std::string label;
    std::size_t value_start;
    std::size_t match_start;
  };
  const std::string s(text);
  std::vector<Hit> hits;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), label_re); it != std::sregex_iterator(); ++it) {
    auto label = to_lower((*it)[1].str());
    std::replace(label.begin(), label.end(), ' ', '_');
    if (label == "selectedregion") label = "selected_region";
    hits.push_back({label, static_cast<std::size_t>(it->position(0) + it->length(0)), static_cast<std::size_t>(it->position(0))});
  }
  auto value_of = [&](const std::string& label) -> std::optional<std::string> {
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i].label != label) continue;
      const auto end = i + 1 < hits.size() ? hits[i + 1].match_start : s.size();
      return strip_value(std::string_view(s).substr(hits[i].value_start, end - hits[i].value_start));
    }
    return std::nullopt;
  };

  const auto region = value_of("selected_region");
  if (!region) throw ParseError("missing field SELECTED_REGION", "SELECTED_REGION", s);
  static const std::regex index_re(R"(^(?:region\s*)?(\d+)\b)", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(*region, m, index_re)) throw ParseError("SELECTED_REGION is not 'Region N'", "SELECTED_REGION", s);
  std::size_t index = 0;
  try {
    index = std::stoul(m[1].str());
  } catch (const std::exception&) {
    throw ParseError("SELECTED_REGION index does not fit", "SELECTED_REGION", s);
  }

  const auto role_text = value_of("role");
  if (!role_text) throw ParseError("missing field ROLE", "ROLE", s);
  const auto role = parse_step_role(enum_token(*role_text));
  if (!role) throw ParseError("unknown ROLE '" + *role_text + "'", "ROLE", s);

  const auto reasoning = value_of("reasoning");
  if (!reasoning) throw ParseError("missing field REASONING", "REASONING", s);
  if (reasoning->empty()) throw ParseError("empty REASONING", "REASONING", s);

  const auto relation_text = value_of("relationship");
  if (!relation_text) throw ParseError("missing field RELATIONSHIP", "RELATIONSHIP", s);
  const auto relation = parse_relation(enum_token(*relation_text));
  if (!relation) throw ParseError("unknown RELATIONSHIP '" + *relation_text + "'", "RELATIONSHIP", s);

  if (index >= region_count) {
    throw RangeError("region " + std::to_string(index) + " out of range (" + std::to_string(region_count) + " regions)");
  }
  return ReasoningStep(index, *role, *reasoning, *relation);
}

std::string region_content(const Region& r) {
  const auto& b = r.bbox();
  return r.description() + " [" + std::to_string(b.x1()) + ", " + std::to_string(b.y1()) + ", " +
         std::to_string(b.x2()) + ", " + std::to_string(b.y2()) + "]";
}

std::string describe_region(std::size_t index, const Region& r) {
  return "Region " + std::to_string(index) + ": " + region_content(r);
}

ReasoningChain build_chain(clients::ModelClient& model, const GroundedSample& gs, const ChainBuilderConfig& cfg) {
  validate(cfg);
  const auto& regions = gs.regions();
  const auto& sample = gs.sample();
  const std::size_t n = regions.size();
  if (n == 0) throw UsageError("build_chain needs at least one region");

  // Calls the model, retrying once with the error attached; nullopt after two failures.
  auto ask = [&](clients::ModelRequest req, auto&& parse) -> std::optional<ReasoningStep> {
    const auto original = req.prompt;
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        return parse(model.complete(req));
      } catch (const ParseError& e) {
        log_warning("sample " + sample.sample_id() + ": " + e.what());
        req.prompt = retry_prompt(original, e.what());
      } catch (const RangeError& e) {
        log_warning("sample " + sample.sample_id() + ": " + e.what());
        req.prompt = retry_prompt(original, e.what());
      } catch (const ConstructionError& e) {
        log_warning("sample " + sample.sample_id() + ": " + e.what());
        req.prompt = retry_prompt(original, e.what());
      }
    }
    return std::nullopt;
  };

  if (n == 1) {
    clients::ModelRequest req;
    req.prompt = prompts::render(prompts::TemplateId::single_step,
                                 {{"question", sample.question()},
                                  {"keywords", join(gs.keywords(), ", ")},
                                  {"region_index", "0"},
                                  {"bbox_content", region_content(regions[0])}});
    req.image_refs = {clients::image_ref(sample.image_path()), image_crop(sample, regions[0])};
    auto step = ask(req, [&](const std::string& text) { return parse_step_output(text, 1); });
    if (!step) throw ChainFailed("sample " + sample.sample_id() + ": single-step output unparseable after retry");
    return ReasoningChain({step->with_relation(Relation::none)}, QuestionType::sequential);
  }

  const auto qt = classify_question_type(model, sample, gs.keywords());
  const std::size_t max_steps = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.max_steps.value_or(static_cast<int>(n))));
  std::vector<std::size_t> remaining(n);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = i;
  std::vector<ReasoningStep> steps;
  bool truncated = false;

  while (steps.size() < max_steps && !remaining.empty()) {
    std::vector<std::string> available;
    clients::ModelRequest req;
    req.image_refs = {clients::image_ref(sample.image_path())};
    for (auto i : remaining) {
      available.push_back(describe_region(i, regions[i]));
      req.image_refs.push_back(image_crop(sample, regions[i]));
    }
    req.prompt = prompts::render(prompts::TemplateId::multi_step,
                                 {{"question", sample.question()},
                                  {"used_count", std::to_string(steps.size())},
                                  {"total_count", std::to_string(n)},
                                  {"question_type", std::string(to_string(qt))},
                                  {"previous_steps", previous_steps_text(steps)},
                                  {"available_regions", join(available, "; ")},
                                  {"role_instruction", role_instruction(steps.empty(), qt, cfg)}});
    auto step = ask(req, [&](const std::string& text) {
      auto parsed = parse_step_output(text, n);
      if (std::ranges::find(remaining, parsed.region_index()) == remaining.end()) {
        throw RangeError("region " + std::to_string(parsed.region_index()) + " was already used");
      }
      return parsed;
    });
    if (!step) {
      if (steps.empty()) throw ChainFailed("sample " + sample.sample_id() + ": entry step unparseable after retry");
      truncated = true;
      break;
    }
    Relation rel = step->relation();
    if (steps.empty()) rel = Relation::none;
    else if (rel == Relation::none) rel = Relation::sequential;
    steps.push_back(step->with_relation(rel));
    std::erase(remaining, step->region_index());
    if (step->role() == StepRole::conclusion || step->role() == StepRole::direct_answer) break;
  }
  return ReasoningChain(std::move(steps), qt, truncated);
}

std::string step_letter(std::size_t position) {
  std::string out;
  std::size_t v = position + 1;
  while (v > 0) {
    --v;
    out.insert(out.begin(), static_cast<char>('A' + v % 26));
    v /= 26;
  }
  return out;
}

std::string render_chain(const ReasoningChain& chain, const GroundedSample& gs) {
  if (auto v = validate_chain(chain, gs); !v.empty()) throw UsageError("cannot render invalid chain: " + v.front());
  std::string out;
  std::vector<std::string> notation;
  for (std::size_t b = 0; b < chain.branches().size(); ++b) {
    if (b > 0) out += '\n';
    std::vector<std::string> letters;
    for (auto pos : chain.branches()[b]) {
      const auto& s = chain.steps()[pos];
      out += "Step " + std::to_string(pos + 1) + " [Region " + std::to_string(s.region_index()) + ", " +
             std::string(to_string(s.role())) + "]: " + s.reasoning() + "\n";
      letters.push_back(step_letter(pos));
    }
    notation.push_back(join(letters, "→"));
  }
  out += "Chain: " + join(notation, ", ");
  return out;
}

std::vector<std::string> validate_chain(const std::vector<ReasoningStep>& steps, const GroundedSample& gs) {
  auto out = chain_violations(steps);
  for (const auto& s : steps) {
    if (s.region_index() >= gs.regions().size()) out.push_back("region " + std::to_string(s.region_index()) + " out of range");
  }
  return out;
}

std::vector<std::string> validate_chain(const ReasoningChain& chain, const GroundedSample& gs) {
  return validate_chain(chain.steps(), gs);
}

}  // namespace cocot::chains
