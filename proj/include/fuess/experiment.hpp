#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuess/domain.hpp"
#include "fuess/llm.hpp"
#include "fuess/metrics.hpp"
#include "fuess/selection.hpp"
#include "fuess/ufss.hpp"

namespace fuess {

inline constexpr int kReportVersion = 1;

/// Either a CSV file (with optional metadata sidecar) or a synthetic preset.
struct DatasetSource {
  std::optional<std::string> csv;
  std::string primary;
  std::optional<std::string> metadata;
  std::optional<std::string> preset;
  std::size_t n_samples = 600;
  std::uint64_t seed = 0;
  double noise_std = 0.0;
};

/// Without `runs` or `file` every catalog variable is used.
struct SelectionSpec {
  std::size_t runs = 0;  // > 0: run the selector this many times
  double fraction = 0.5;
  std::optional<std::string> knowledge_dir;
  std::optional<std::string> file;  // precomputed selection.json
};

struct ExperimentSpec {
  DatasetSource dataset;
  /// "llm" plus any of "lr", "knn", "pcr", "mlp".
  std::vector<std::string> methods;
  PredictionMode mode = PredictionMode::Fsc;
  /// FSC: demonstrations taken from the front of each context.
  /// RAC: retrieval depth.
  std::vector<std::size_t> shots{10};
  std::vector<double> missing_ratios{0.0};
  std::optional<std::size_t> trials;
  std::vector<std::uint64_t> seeds{0};
  SplitParams split;
  SelectionSpec selection;
  AblationFlags ablation;
  double temperature = 0.0;
  CiMethod ci_method = CiMethod::TSpread;
  double ci_level = 0.95;
  std::string backend = "stub";  // "stub" or "remote"
  std::optional<std::size_t> max_tests;  // per seed
  std::size_t baseline_folds = 5;
};

/// Throws InvalidSpec naming the offending field.
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

struct CellKey {
  std::string method;
  PredictionMode mode = PredictionMode::Fsc;
  std::size_t shots = 0;
  double missing_ratio = 0.0;

  bool operator==(const CellKey&) const = default;
};

struct SampleOutcome {
  CellKey cell;
  std::uint64_t seed = 0;
  std::size_t context = 0;
  std::size_t test_id = 0;  // row in the dataset
  double y_true = 0.0;
  std::optional<double> y_pred;
  std::optional<double> confidence;
  std::optional<PredictionRecord> record;  // LLM method only
  std::string error;
};

struct CellSummary {
  CellKey cell;
  std::size_t n = 0;
  std::size_t failures = 0;
  std::optional<Metrics> metrics;  // r2 meaningless when status is degenerate-r2
  std::optional<double> mean_confidence;
  std::string status;  // ok | partial | degenerate-r2 | failed
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<SampleOutcome> outcomes;
  std::vector<CellSummary> cells;
  std::optional<SelectionResult> selection;
  std::optional<double> ascs;
  std::vector<std::string> warnings;
};

/// Aggregates outcomes per cell, in first-appearance order.
std::vector<CellSummary> summarize(const std::vector<SampleOutcome>& outcomes);

/// `backend` overrides spec.backend; by default the stub is given the pool
/// samples as its data sidecar.
ExperimentReport run_experiment(const ExperimentSpec& spec, LlmBackend* backend = nullptr);

/// metrics.csv, nshot_curve.csv, missing_ratio.csv, confidence_error.csv,
/// ascs.csv, records.jsonl, spec.json and (when present) selection.json.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace fuess
