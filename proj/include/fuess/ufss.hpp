#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuess/domain.hpp"
#include "fuess/llm.hpp"
#include "fuess/prompt.hpp"
#include "fuess/selection.hpp"
#include "fuess/vector_store.hpp"

namespace fuess {

enum class PredictionMode { Fsc, Rac };

/// T_SPREAD: Student-t interval on the mean of the trials,
///   mean ± t_{(1+level)/2, n-1} · s / sqrt(n).
/// T_PREDICTION: Student-t prediction interval for one further trial,
///   mean ± t_{(1+level)/2, n-1} · s · sqrt(1 + 1/n).
/// PERCENTILE: empirical quantiles (linear interpolation), n >= 20.
enum class CiMethod { TSpread, TPrediction, Percentile };

std::string to_string(PredictionMode mode);
std::string to_string(CiMethod method);
PredictionMode parse_prediction_mode(std::string_view text);
CiMethod parse_ci_method(std::string_view text);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  CiMethod method = CiMethod::TSpread;

  bool operator==(const ConfidenceInterval&) const = default;
};

/// Throws TooFewTrials below 2 trials (20 for PERCENTILE) and
/// InvalidArgument for a level outside (0, 1).
ConfidenceInterval confidence_interval(std::span<const double> trials, double level = 0.95,
                                       CiMethod method = CiMethod::TSpread);

struct UfssConfig {
  PredictionMode mode = PredictionMode::Fsc;
  std::size_t k_shots = 10;  // RAC retrieval depth
  /// Completions per test sample; unset means 10 for FSC and 1 for RAC.
  std::optional<std::size_t> trials;
  double ci_level = 0.95;
  CiMethod ci_method = CiMethod::TSpread;
  GenerationParams generation;
  AblationFlags ablation;
  /// Needed only for an IPDVS built with build_ipdvs_text.
  const EmbeddingProvider* text_embedder = nullptr;

  std::size_t effective_trials() const;
};

struct PredictionRecord {
  std::size_t id = 0;
  Sample test_sample;  // as rendered (label kept for scoring)
  double point_estimate = 0.0;
  std::vector<double> trials;
  std::optional<ConfidenceInterval> confidence_interval;
  std::optional<double> confidence_score;  // absent under no-ec
  std::string explanation;
  PredictionMode mode = PredictionMode::Fsc;
  std::size_t k_shots = 0;
  AblationFlags ablation;
  std::vector<std::string> warnings;

  bool operator==(const PredictionRecord&) const = default;
};

nlohmann::json to_json(const PredictionRecord& record);
PredictionRecord record_from_json(const nlohmann::json& j);
void write_records_jsonl(std::span<const PredictionRecord> records, const std::filesystem::path& path);
std::vector<PredictionRecord> read_records_jsonl(const std::filesystem::path& path);

/// Copy of `sample` holding only `names`, in that order. Throws
/// UnknownVariable when one is absent.
Sample restrict_sample(const Sample& sample, std::span<const std::string> names);

/// Few-shot contextualization: one prompt, cfg.effective_trials() completions.
/// Demonstrations and test are restricted to selection.selected first.
PredictionRecord predict_fsc(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                             const ContextSet& context, const Sample& test,
                             const SelectionResult& selection, LlmBackend& backend,
                             const UfssConfig& cfg);

/// Retrieval-augmented contextualization: the cfg.k_shots nearest stored
/// samples become the demonstrations, nearest last.
PredictionRecord predict_rac(const TaskConfig& task, const std::vector<VariableSpec>& catalog,
                             const VectorStore& ipdvs, const Sample& test,
                             const SelectionResult& selection, LlmBackend& backend,
                             const UfssConfig& cfg);

/// The demonstrations predict_rac would use, nearest last.
ContextSet retrieve_demonstrations(const VectorStore& ipdvs, const Sample& test, std::size_t k,
                                   const EmbeddingProvider* text_embedder = nullptr);

}  // namespace fuess
