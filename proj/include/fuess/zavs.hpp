#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "fuess/domain.hpp"
#include "fuess/llm.hpp"
#include "fuess/selection.hpp"
#include "fuess/vector_store.hpp"

namespace fuess {

struct LocalExplanation {
  std::string variable;
  std::string reasoning;
};

/// Knobs shared by the global and local queries.
struct ZavsConfig {
  std::size_t n_runs = 5;
  double fraction = 0.5;
  std::size_t knowledge_top_k = kDefaultKnowledgeTopK;
  GenerationParams generation;
};

/// m = round-half-up(fraction * catalog_size). fraction must be in (0, 1].
std::size_t selection_size(double fraction, std::size_t catalog_size);

/// Reads per-variable scores out of a "score and ranking" string. Each line
/// holds one variable and its score ("1. Name: 0.95"); names are matched to
/// `catalog` case-insensitively, falling back to the longest catalog name the
/// line contains. Scores are clamped below at 0 and divided by the largest
/// score when that exceeds 1. Throws SchemaViolation when nothing matches.
std::vector<ScoredVariable> parse_score_ranking(std::string_view text,
                                                const std::vector<std::string>& catalog);

/// Averages per-run scores (variables a run omits score 0 in that run),
/// ranks by descending mean with alphabetical ties and keeps the top m.
/// The explanation of the last run becomes the global explanation.
SelectionResult aggregate_runs(const std::vector<std::string>& catalog,
                               const std::vector<std::vector<ScoredVariable>>& run_scores,
                               const std::vector<std::string>& run_explanations, double fraction);

/// Global retrieval-augmented selection repeated `cfg.n_runs` times. Failed
/// runs are skipped with a warning; AllRunsFailed when none succeeds.
SelectionResult select_variables(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                                 const VectorStore& ikvs, const EmbeddingProvider& embedder,
                                 LlmBackend& backend, const ZavsConfig& cfg = {});

/// Local query about a single catalog variable.
LocalExplanation explain_variable(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                                  const std::string& variable, const VectorStore& ikvs,
                                  const EmbeddingProvider& embedder, LlmBackend& backend,
                                  const ZavsConfig& cfg = {});

/// Average pairwise overlap fraction of equally sized selections:
/// (sum over pairs i<j of |Ai ∩ Aj| / m) / C(n, 2).
double ascs(const std::vector<std::vector<std::string>>& selections, std::size_t m);

/// The same quantity from a precomputed pairwise overlap sum.
double ascs_from_overlap_sum(double overlap_sum, std::size_t n, std::size_t m);

}  // namespace fuess
