#include "cocot/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

#include "cocot/errors.hpp"
#include "cocot/text.hpp"

namespace cocot::prompts {

namespace {

struct Asset {
  std::string_view name;
  std::string_view body;
};

// Generated at configure time from assets/prompts/*.txt.
constexpr Asset kAssets[] = {
#include "prompt_assets.inc"
};

constexpr std::pair<TemplateId, std::string_view> kNames[] = {
    {TemplateId::single_step, "single_step"},
    {TemplateId::multi_step, "multi_step"},
    {TemplateId::train_stage1, "train_stage1"},
    {TemplateId::train_stage2, "train_stage2"},
    {TemplateId::infer_direct, "infer_direct"},
    {TemplateId::infer_cocot_stage1, "infer_cocot_stage1"},
    {TemplateId::infer_cocot_stage2, "infer_cocot_stage2"},
    {TemplateId::infer_viscot_stage1, "infer_viscot_stage1"},
    {TemplateId::infer_viscot_stage2, "infer_viscot_stage2"},
    {TemplateId::infer_minus_rar, "infer_minus_rar"},
    {TemplateId::infer_replaced_rar, "infer_replaced_rar"},
    {TemplateId::infer_qwen_rar, "infer_qwen_rar"},
    {TemplateId::classify_question_type, "classify_question_type"},
};

bool is_name_char(char c) { return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text for literal runs and on_name for each {name} placeholder.
template <typename OnText, typename OnName>
void scan(std::string_view body, OnText on_text, OnName on_name) {
  std::size_t i = 0, lit = 0;
  while (i < body.size()) {
    if (body[i] == '{') {
      std::size_t j = i + 1;
      while (j < body.size() && is_name_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}' && j > i + 1) {
        on_text(body.substr(lit, i - lit));
        on_name(body.substr(i + 1, j - i - 1));
        i = lit = j + 1;
        continue;
      }
    }
    ++i;
  }
  on_text(body.substr(lit));
}

std::vector<PromptTemplate> build_registry() {
  std::vector<PromptTemplate> out;
  for (const auto& [id, name] : kNames) {
    auto it = std::ranges::find_if(kAssets, [&](const Asset& a) { return a.name == name; });
    if (it == std::end(kAssets)) throw Error("prompt asset missing for template " + std::string(name));
    PromptTemplate t{id, name, it->body, {}};
    for (auto& p : placeholders_in(t.body)) t.required_placeholders.insert(std::move(p));
    out.push_back(std::move(t));
  }
  return out;
}

const std::vector<PromptTemplate>& registry() {
  static const std::vector<PromptTemplate> r = build_registry();
  return r;
}

}  // namespace

const std::vector<TemplateId>& all_templates() {
  static const std::vector<TemplateId> ids = [] {
    std::vector<TemplateId> v;
    for (const auto& [id, _] : kNames) v.push_back(id);
    return v;
  }();
  return ids;
}

std::string_view to_string(TemplateId id) {
  for (const auto& [i, name] : kNames) {
    if (i == id) return name;
  }
  return "?";
}

std::optional<TemplateId> parse_template_id(std::string_view name) {
  for (const auto& [id, n] : kNames) {
    if (n == name) return id;
  }
  return std::nullopt;
}

const PromptTemplate& get(TemplateId id) {
  for (const auto& t : registry()) {
    if (t.id == id) return t;
  }
  throw UsageError("unknown template id");
}

std::vector<std::string> placeholders_in(std::string_view body) {
  std::vector<std::string> out;
  scan(
      body, [](std::string_view) {},
      [&](std::string_view name) {
        if (std::ranges::find(out, name) == out.end()) out.emplace_back(name);
      });
  return out;
}

std::string render_text(std::string_view body, const Bindings& bindings) {
  const auto names = placeholders_in(body);
  for (const auto& n : names) {
    if (!bindings.contains(n)) throw TemplateError("missing binding for placeholder '" + n + "'", n);
  }
  for (const auto& [k, _] : bindings) {
    if (std::ranges::find(names, k) == names.end()) throw TemplateError("unexpected binding '" + k + "'", k);
  }
  std::string out;
  out.reserve(body.size() + 64);
  scan(
      body, [&](std::string_view text) { out += text; },
      [&](std::string_view name) { out += bindings.find(name)->second; });
  return out;
}

std::string render(TemplateId id, const Bindings& bindings) { return render_text(get(id).body, bindings); }

std::string registry_checksum() {
  std::string all;
  for (const auto& t : registry()) {
    all += t.name;
    all += '\0';
    all += t.body;
    all += '\0';
  }
  return fnv1a_hex(all);
}

}  // namespace cocot::prompts
