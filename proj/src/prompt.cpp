#include "fuess/prompt.hpp"

#include <algorithm>
#include <map>

#include "fuess/error.hpp"

namespace fuess {

namespace {

struct TemplateEntry {
  std::string_view name;
  std::string_view text;
};

// Generated from templates/*.tmpl at configure time.
constexpr TemplateEntry kTemplates[] = {
#include "fuess/prompt_templates.inc"
};

using Values = std::vector<std::pair<std::string, std::string>>;

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string describe_variable(const VariableSpec& v) {
  std::string line = "- " + v.name;
  if (!v.description.empty() && v.description != v.name) line += " (" + v.description + ")";
  if (!v.unit.empty()) line += " [unit: " + v.unit + "]";
  return line;
}

std::string describe_variables(const std::vector<std::string>& names,
                               const std::vector<VariableSpec>& catalog) {
  std::vector<std::string> lines;
  for (const auto& name : names) {
    auto it = std::find_if(catalog.begin(), catalog.end(),
                           [&](const VariableSpec& v) { return v.name == name; });
    lines.push_back(describe_variable(it != catalog.end() ? *it : VariableSpec{name, {}, {}}));
  }
  return join(lines, "\n");
}

Values task_values(const TaskConfig& task, std::size_t feature_count) {
  return {{"Industrial Process", task.industrial_process},
          {"Facility", task.facility},
          {"Primary Variable", task.primary_variable_name},
          {"Feature Count", std::to_string(feature_count)}};
}

std::string render_named(std::string_view name, const Values& values,
                         const std::vector<std::string>& drop = {}) {
  return render_template(template_text(name), values, drop);
}

std::string render_context(const RetrievedContext& context) {
  if (context.chunks.empty()) return std::string(template_text("avs_context_empty"));
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < context.chunks.size(); ++i) {
    const auto& c = context.chunks[i];
    parts.push_back("--- Document " + std::to_string(i + 1) + " (source: " + c.source +
                    ", characters " + std::to_string(c.begin) + "-" + std::to_string(c.end) +
                    ") ---\n" + c.text);
  }
  return join(parts, "\n\n");
}

}  // namespace

std::string ChatPrompt::full_text() const {
  if (system.empty()) return user;
  return system + "\n\n" + user;
}

AblationFlags parse_ablation_flags(std::string_view text) {
  AblationFlags flags;
  while (!text.empty()) {
    const auto comma = text.find(',');
    auto token = text.substr(0, comma);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (token == "no-role") {
      flags.no_role = true;
    } else if (token == "no-cot") {
      flags.no_cot = true;
    } else if (token == "no-ec") {
      flags.no_ec = true;
    } else if (!token.empty() && token != "full") {
      throw Error(Errc::InvalidArgument, "unknown ablation flag '" + std::string(token) + "'",
                  std::string(token));
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return flags;
}

std::string to_string(const AblationFlags& flags) {
  std::vector<std::string> parts;
  if (flags.no_role) parts.emplace_back("no-role");
  if (flags.no_cot) parts.emplace_back("no-cot");
  if (flags.no_ec) parts.emplace_back("no-ec");
  return parts.empty() ? "full" : join(parts, ",");
}

std::string_view template_text(std::string_view name) {
  for (const auto& t : kTemplates) {
    if (t.name == name) return t.text;
  }
  throw Error(Errc::InvalidArgument, "unknown template '" + std::string(name) + "'",
              std::string(name));
}

std::vector<std::string> template_names() {
  std::vector<std::string> out;
  for (const auto& t : kTemplates) out.emplace_back(t.name);
  return out;
}

std::string render_template(std::string_view text, const Values& values,
                            const std::vector<std::string>& drop_sections) {
  std::string out;
  out.reserve(text.size() + 256);
  std::vector<std::string> open;  // currently open section tags
  bool dropping = false;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      if (!dropping) out.push_back(text[i]);
      ++i;
      continue;
    }
    const auto close = text.find('}', i + 1);
    if (close == std::string_view::npos) {
      if (!dropping) out.append(text.substr(i));
      break;
    }
    const auto inner = text.substr(i + 1, close - i - 1);
    if (inner.size() > 1 && (inner.front() == '#' || inner.front() == '/') &&
        inner.find('{') == std::string_view::npos) {
      const std::string tag(inner.substr(1));
      if (inner.front() == '#') {
        if (!open.empty()) {
          throw Error(Errc::InvalidArgument, "nested template section '" + tag + "'", tag);
        }
        open.push_back(tag);
        dropping = std::find(drop_sections.begin(), drop_sections.end(), tag) != drop_sections.end();
      } else {
        if (open.empty() || open.back() != tag) {
          throw Error(Errc::InvalidArgument, "unbalanced template section '" + tag + "'", tag);
        }
        open.pop_back();
        dropping = false;
      }
      i = close + 1;
      continue;
    }
    auto it = std::find_if(values.begin(), values.end(),
                           [&](const auto& kv) { return kv.first == inner; });
    if (it != values.end()) {
      if (!dropping) out += it->second;
      i = close + 1;
    } else {
      if (!dropping) out.push_back('{');
      ++i;
    }
  }
  if (!open.empty()) {
    throw Error(Errc::InvalidArgument, "unterminated template section '" + open.back() + "'",
                open.back());
  }
  return out;
}

std::string format_sample_text(const Sample& sample, bool include_label,
                               std::string_view primary_variable) {
  std::string out;
  for (std::size_t i = 0; i < sample.values.size(); ++i) {
    const auto& e = sample.values[i];
    if (i) out += ", ";
    out += e.name;
    out += ": ";
    out += e.value ? format_number(*e.value) : std::string("N/A");
  }
  if (include_label) {
    out += " -> ";
    out += primary_variable;
    out += ": ";
    out += sample.label ? format_number(*sample.label) : std::string("N/A");
  }
  return out;
}

Sample parse_sample_text(std::string_view line) {
  const auto bad = [&](const std::string& why) {
    return Error(Errc::InvalidArgument, "malformed sample line (" + why + "): " + std::string(line));
  };
  const auto parse_pair = [&](std::string_view item) -> Entry {
    const auto sep = item.rfind(": ");
    if (sep == std::string_view::npos) throw bad("missing ': '");
    Entry e{std::string(item.substr(0, sep)), std::nullopt};
    const auto value = item.substr(sep + 2);
    if (value != "N/A") {
      e.value = parse_number(value);
      if (!e.value) throw bad("non-numeric value '" + std::string(value) + "'");
    }
    if (e.name.empty()) throw bad("empty name");
    return e;
  };

  Sample s;
  std::string_view inputs = line;
  if (const auto arrow = line.find(" -> "); arrow != std::string_view::npos) {
    inputs = line.substr(0, arrow);
    s.label = parse_pair(line.substr(arrow + 4)).value;
  }
  while (!inputs.empty()) {
    const auto comma = inputs.find(", ");
    s.values.push_back(parse_pair(inputs.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    inputs.remove_prefix(comma + 2);
  }
  return s;
}

ChatPrompt AvsPrompt::chat() const {
  return {role_block,
          join({data_block, instruction_block, context_block, main_user_block}, "\n\n")};
}

ChatPrompt SsPrompt::chat() const {
  return {role_block, join({data_block, importance_block, global_explanation_block,
                            instruction_block, context_samples_block, main_user_block},
                           "\n\n")};
}

AvsPrompt render_avs_pt(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                        const RetrievedContext& context, QueryKind kind,
                        const std::optional<std::string>& target_variable) {
  if (kind == QueryKind::Local && (!target_variable || target_variable->empty())) {
    throw Error(Errc::MissingTargetVariable, "a local query needs a target variable");
  }
  std::vector<std::string> names;
  for (const auto& v : catalog) names.push_back(v.name);

  auto values = task_values(task, catalog.size());
  values.emplace_back("Variable Descriptions", describe_variables(names, catalog));
  values.emplace_back("Context", render_context(context));
  std::vector<std::string> listed;
  for (const auto& n : names) listed.push_back("- " + n);
  values.emplace_back("Auxiliary Variables", join(listed, "\n"));
  values.emplace_back("Auxiliary Variable", target_variable.value_or(""));

  AvsPrompt p;
  p.query_kind = kind;
  p.target_variable = kind == QueryKind::Local ? target_variable : std::nullopt;
  p.role_block = render_named("role", values);
  p.data_block = render_named("avs_data", values);
  p.context_block = render_named("avs_context", values);
  if (kind == QueryKind::Global) {
    p.instruction_block = render_named("avs_instruction_global", values);
    p.main_user_block = render_named("avs_main_global", values);
  } else {
    p.instruction_block = render_named("avs_instruction_local", values);
    p.main_user_block = render_named("avs_main_local", values);
  }
  return p;
}

SsPrompt render_ss_pt(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                      const SelectionResult& selection, const ContextSet& context,
                      const Sample& test_sample, const AblationFlags& ablation) {
  if (context.demonstrations.empty()) {
    throw Error(Errc::EmptyContext, "the few-shot context has no demonstrations");
  }
  const auto names = test_sample.names();
  for (const auto& n : names) {
    if (!selection.is_selected(n)) {
      throw Error(Errc::UnknownVariable, "test variable '" + n + "' is not in the selection", n);
    }
  }

  std::vector<std::string> demo_lines;
  for (std::size_t i = 0; i < context.demonstrations.size(); ++i) {
    const auto& d = context.demonstrations[i];
    if (!d.label) {
      throw Error(Errc::MissingLabel, "demonstration " + std::to_string(i) + " has no label", {},
                  static_cast<std::int64_t>(i));
    }
    demo_lines.push_back(format_sample_text(d, true, task.primary_variable_name));
  }

  std::vector<std::string> importance;
  std::size_t rank = 0;
  for (const auto& name : selection.ranking) {
    if (!selection.is_selected(name)) continue;
    importance.push_back(std::to_string(++rank) + ". " + name + ": " +
                         format_number(selection.score_of(name)));
  }

  Sample unlabeled = test_sample;
  unlabeled.label.reset();

  auto values = task_values(task, names.size());
  values.emplace_back("Variable Descriptions", describe_variables(names, catalog));
  values.emplace_back("Importance Scores", join(importance, "\n"));
  values.emplace_back("Global Explanation",
                      selection.global_explanation.empty()
                          ? std::string(template_text("ss_explanation_empty"))
                          : selection.global_explanation);
  values.emplace_back("Samples", join(demo_lines, "\n"));
  values.emplace_back("Test Sample", format_sample_text(unlabeled, false));

  std::vector<std::string> drop;
  if (ablation.no_cot) drop.emplace_back("cot");
  if (ablation.no_ec) drop.emplace_back("ec");

  SsPrompt p;
  p.ablation = ablation;
  if (!ablation.no_role) p.role_block = render_named("role", values, drop);
  p.data_block = render_named("ss_data", values, drop);
  p.importance_block = render_named("ss_importance", values, drop);
  p.global_explanation_block = render_named("ss_explanation", values, drop);
  p.instruction_block = render_named("ss_instruction", values, drop);
  p.context_samples_block = render_named("ss_context", values, drop);
  p.main_user_block = render_named("ss_main", values, drop);
  return p;
}

}  // namespace fuess
