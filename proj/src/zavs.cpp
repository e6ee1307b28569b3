#include "fuess/zavs.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "fuess/error.hpp"
#include "fuess/prompt.hpp"
#include "fuess/random.hpp"

namespace fuess {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s, std::string_view junk) {
  const auto b = s.find_first_not_of(junk);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(junk);
  return s.substr(b, e - b + 1);
}

RetrievedContext retrieve(const VectorStore& ikvs, const EmbeddingProvider& embedder,
                          std::string_view query, std::size_t top_k) {
  if (ikvs.kind() != StoreKind::Ikvs) {
    throw Error(Errc::InvalidArgument, "variable selection needs a knowledge store (IKVS)");
  }
  RetrievedContext context;
  if (ikvs.empty() || top_k == 0) return context;
  const auto q = embedder.embed(query);
  for (const auto& hit : ikvs.query_top_k(q, std::min(top_k, ikvs.size()))) {
    context.chunks.push_back(std::get<DocumentChunk>(hit.item->payload));
  }
  return context;
}

std::vector<std::string> names_of(const std::vector<VariableSpec>& catalog) {
  std::vector<std::string> names;
  for (const auto& v : catalog) names.push_back(v.name);
  return names;
}

}  // namespace

double SelectionResult::score_of(const std::string& name) const {
  for (const auto& s : scores) {
    if (s.name == name) return s.score;
  }
  return 0.0;
}

bool SelectionResult::is_selected(const std::string& name) const {
  return std::find(selected.begin(), selected.end(), name) != selected.end();
}

nlohmann::json to_json(const SelectionResult& selection) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : selection.scores) scores.push_back({{"name", s.name}, {"score", s.score}});
  return {{"version", 1},
          {"scores", scores},
          {"ranking", selection.ranking},
          {"selected", selection.selected},
          {"global_explanation", selection.global_explanation},
          {"runs", selection.runs},
          {"fraction", selection.fraction},
          {"run_selections", selection.run_selections},
          {"run_explanations", selection.run_explanations}};
}

SelectionResult selection_from_json(const nlohmann::json& j) {
  SelectionResult r;
  try {
    for (const auto& s : j.at("scores")) {
      r.scores.push_back({s.at("name").get<std::string>(), s.at("score").get<double>()});
    }
    r.ranking = j.at("ranking").get<std::vector<std::string>>();
    r.selected = j.at("selected").get<std::vector<std::string>>();
    r.global_explanation = j.value("global_explanation", std::string());
    r.runs = j.value("runs", std::size_t{0});
    r.fraction = j.value("fraction", 0.0);
    if (j.contains("run_selections")) {
      r.run_selections = j["run_selections"].get<std::vector<std::vector<std::string>>>();
    }
    if (j.contains("run_explanations")) {
      r.run_explanations = j["run_explanations"].get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, std::string("malformed selection JSON: ") + e.what());
  }
  if (r.selected.size() > r.ranking.size() ||
      !std::equal(r.selected.begin(), r.selected.end(), r.ranking.begin())) {
    throw Error(Errc::SchemaViolation, "selected variables are not a prefix of the ranking",
                "selected");
  }
  return r;
}

std::size_t selection_size(double fraction, std::size_t catalog_size) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "selection fraction must be in (0, 1]");
  }
  return std::min(catalog_size, round_half_up(fraction * static_cast<double>(catalog_size)));
}

std::vector<ScoredVariable> parse_score_ranking(std::string_view text,
                                                const std::vector<std::string>& catalog) {
  static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  static const std::regex rank_prefix(R"(^\s*(?:\d+\s*[.):]|[-*•]+)\s*)");

  std::vector<std::string> lowered;
  for (const auto& n : catalog) lowered.push_back(lower(n));

  std::vector<ScoredVariable> out;
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;

    line = std::regex_replace(line, rank_prefix, "", std::regex_constants::format_first_only);
    std::smatch last;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), number);
         it != std::sregex_iterator(); ++it) {
      last = *it;
    }
    if (last.empty()) continue;
    const auto score = parse_number(last.str());
    if (!score) continue;
    const auto name_part = lower(trim(std::string_view(line).substr(0, last.position()),
                                      " \t\r:=-,;()[]*\"'"));
    if (name_part.empty()) continue;

    std::optional<std::size_t> match;
    for (std::size_t i = 0; i < lowered.size(); ++i) {
      if (lowered[i] == name_part) match = i;
    }
    if (!match) {
      for (std::size_t i = 0; i < lowered.size(); ++i) {
        if (name_part.find(lowered[i]) != std::string::npos &&
            (!match || lowered[i].size() > lowered[*match].size())) {
          match = i;
        }
      }
    }
    if (!match || !seen.insert(catalog[*match]).second) continue;
    out.push_back({catalog[*match], std::max(0.0, *score)});
  }
  if (out.empty()) {
    throw Error(Errc::SchemaViolation, "no catalog variable found in the score ranking",
                "score and ranking");
  }
  double top = 0.0;
  for (const auto& s : out) top = std::max(top, s.score);
  if (top > 1.0) {
    for (auto& s : out) s.score /= top;
  }
  return out;
}

SelectionResult aggregate_runs(const std::vector<std::string>& catalog,
                               const std::vector<std::vector<ScoredVariable>>& run_scores,
                               const std::vector<std::string>& run_explanations, double fraction) {
  if (run_scores.empty()) throw Error(Errc::AllRunsFailed, "no run to aggregate");
  const std::size_t m = selection_size(fraction, catalog.size());

  const auto rank = [&](const std::vector<ScoredVariable>& scores) {
    std::vector<ScoredVariable> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.name < b.name;
    });
    std::vector<std::string> names;
    for (const auto& s : sorted) names.push_back(s.name);
    return names;
  };

  SelectionResult r;
  r.fraction = fraction;
  r.runs = run_scores.size();
  for (const auto& name : catalog) r.scores.push_back({name, 0.0});
  for (const auto& run : run_scores) {
    std::vector<ScoredVariable> full;
    for (const auto& name : catalog) {
      double score = 0.0;
      for (const auto& s : run) {
        if (s.name == name) score = s.score;
      }
      full.push_back({name, score});
    }
    for (std::size_t i = 0; i < catalog.size(); ++i) r.scores[i].score += full[i].score;
    auto ranked = rank(full);
    ranked.resize(m);
    r.run_selections.push_back(std::move(ranked));
  }
  for (auto& s : r.scores) s.score /= static_cast<double>(run_scores.size());
  r.ranking = rank(r.scores);
  r.selected.assign(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(m));
  r.run_explanations = run_explanations;
  if (!run_explanations.empty()) r.global_explanation = run_explanations.back();
  return r;
}

SelectionResult select_variables(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                                 const VectorStore& ikvs, const EmbeddingProvider& embedder,
                                 LlmBackend& backend, const ZavsConfig& cfg) {
  if (cfg.n_runs == 0) throw Error(Errc::InvalidArgument, "n_runs must be >= 1");
  if (catalog.empty()) throw Error(Errc::InvalidArgument, "empty variable catalog");
  selection_size(cfg.fraction, catalog.size());
  const auto names = names_of(catalog);

  std::string query;
  for (std::size_t i = 0; i < names.size(); ++i) query += (i ? ", " : "") + names[i];
  const auto context = retrieve(ikvs, embedder, query, cfg.knowledge_top_k);
  const auto prompt = render_avs_pt(task, catalog, context, QueryKind::Global).chat();

  std::vector<std::vector<ScoredVariable>> run_scores;
  std::vector<std::string> explanations;
  std::exception_ptr last_failure;
  for (std::size_t run = 0; run < cfg.n_runs; ++run) {
    try {
      auto params = cfg.generation;
      if (params.seed) params.seed = derive_seed(*params.seed, run);
      const auto raw = backend.complete(prompt, params);
      const auto answer = parse_response(ResponseKind::ZavsGlobal, raw);
      run_scores.push_back(parse_score_ranking(answer.zavs_global->score_and_ranking, names));
      explanations.push_back(answer.zavs_global->reasoning);
    } catch (const Error& e) {
      spdlog::warn("selection run {} failed: {}", run + 1, e.what());
      last_failure = std::current_exception();
    }
  }
  if (run_scores.empty()) {
    try {
      std::rethrow_exception(last_failure);
    } catch (...) {
      std::throw_with_nested(
          Error(Errc::AllRunsFailed, "all " + std::to_string(cfg.n_runs) + " selection runs failed"));
    }
  }
  return aggregate_runs(names, run_scores, explanations, cfg.fraction);
}

LocalExplanation explain_variable(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                                  const std::string& variable, const VectorStore& ikvs,
                                  const EmbeddingProvider& embedder, LlmBackend& backend,
                                  const ZavsConfig& cfg) {
  const bool known = std::any_of(catalog.begin(), catalog.end(),
                                 [&](const VariableSpec& v) { return v.name == variable; });
  if (!known) throw Error(Errc::UnknownVariable, "'" + variable + "' is not in the catalog", variable);
  const auto context = retrieve(ikvs, embedder, variable, cfg.knowledge_top_k);
  const auto prompt = render_avs_pt(task, catalog, context, QueryKind::Local, variable).chat();
  const auto answer = parse_response(ResponseKind::ZavsLocal, backend.complete(prompt, cfg.generation));
  return {variable, answer.zavs_local->reasoning};
}

double ascs_from_overlap_sum(double overlap_sum, std::size_t n, std::size_t m) {
  if (n < 2) throw Error(Errc::TooFewSelections, "ASCS needs at least two selections");
  if (m == 0) throw Error(Errc::SizeMismatch, "selections must not be empty");
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return overlap_sum / static_cast<double>(m) / pairs;
}

double ascs(const std::vector<std::vector<std::string>>& selections, std::size_t m) {
  if (selections.size() < 2) throw Error(Errc::TooFewSelections, "ASCS needs at least two selections");
  std::vector<std::set<std::string>> sets;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    std::set<std::string> s(selections[i].begin(), selections[i].end());
    if (s.size() != m || selections[i].size() != m) {
      throw Error(Errc::SizeMismatch,
                  "selection " + std::to_string(i) + " has " + std::to_string(s.size()) +
                      " distinct variables, expected " + std::to_string(m),
                  {}, static_cast<std::int64_t>(i));
    }
    sets.push_back(std::move(s));
  }
  double overlap = 0.0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j) {
      for (const auto& x : sets[i]) overlap += static_cast<double>(sets[j].count(x));
    }
  }
  return ascs_from_overlap_sum(overlap, sets.size(), m);
}

}  // namespace fuess
