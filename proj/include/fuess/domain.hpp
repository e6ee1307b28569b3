#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fuess {

/// One row of a variable catalog: name, free-text description and unit
/// ("/" for dimensionless).
struct VariableSpec {
  std::string name;
  std::string description;
  std::string unit;

  bool operator==(const VariableSpec&) const = default;
};

/// A process value; std::nullopt is a missing reading.
using Value = std::optional<double>;

struct Entry {
  std::string name;
  Value value;

  bool operator==(const Entry&) const = default;
};

/// Named auxiliary-variable readings in catalog order plus the optional
/// primary-variable label.
struct Sample {
  std::vector<Entry> values;
  std::optional<double> label;

  const Value* find(std::string_view name) const;
  std::size_t missing_count() const;
  std::vector<std::string> names() const;

  bool operator==(const Sample&) const = default;
};

struct TaskConfig {
  std::string industrial_process = "industrial process";
  std::string facility = "production facility";
  std::string primary_variable_name;
  std::size_t feature_count = 0;

  bool operator==(const TaskConfig&) const = default;
};

struct Dataset {
  std::vector<VariableSpec> catalog;
  VariableSpec primary_variable;
  std::vector<Sample> samples;
  TaskConfig task;

  std::vector<std::string> variable_names() const;
  const VariableSpec* find_variable(std::string_view name) const;

  /// Copy keeping only `names` (in the given order) for catalog and samples.
  /// Throws UnknownVariable for a name outside the catalog.
  Dataset restricted_to(std::span<const std::string> names) const;

  /// Throws when the catalog/sample invariants do not hold.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct ContextPair {
  std::vector<Sample> context;
  std::vector<Sample> tests;
  std::vector<std::size_t> context_indices;  // into Dataset::samples
  std::vector<std::size_t> test_indices;
};

struct ContextSplit {
  std::vector<ContextPair> contexts;
  std::vector<std::size_t> pool_indices;
  std::uint64_t seed = 0;
};

struct SplitParams {
  std::size_t pool_size = 200;
  std::size_t n_contexts = 10;
  std::size_t context_size = 20;
  std::size_t tests_per_context = 20;
  std::uint64_t seed = 0;
};

/// Shortest decimal string that parses back to exactly `x`.
std::string format_number(double x);

/// Parses a finite decimal (leading/trailing blanks allowed). std::nullopt
/// when the text is not a complete number.
std::optional<double> parse_number(std::string_view text);

/// floor(x + 0.5) with a 1e-9 guard so products like 0.5 * 7 land on 4.
std::size_t round_half_up(double x);

/// Checks that a variable name can be rendered as "Name: value" text and
/// parsed back unambiguously.
bool is_renderable_name(std::string_view name);

std::vector<VariableSpec> load_metadata(const std::filesystem::path& path);
void save_metadata(std::span<const VariableSpec> catalog, const std::filesystem::path& path);

/// Reads a CSV with a header row. Empty cells and "N/A" are missing values;
/// every row needs a label in the `primary_variable` column. Descriptions and
/// units come from the optional metadata sidecar.
Dataset load_dataset(const std::filesystem::path& path, std::string_view primary_variable,
                     const std::optional<std::filesystem::path>& metadata = std::nullopt);

/// Column names of a CSV header row.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

/// Writes the catalog columns then the primary variable, missing as "N/A".
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& dataset);

/// {"values": [[name, value|null], ...], "label": value|null}
nlohmann::json sample_to_json(const Sample& sample);
/// Inverse of sample_to_json; throws nlohmann::json exceptions on bad input.
Sample sample_from_json(const nlohmann::json& j);

/// Replays the few-shot contextualization protocol. A seeded shuffle picks a
/// pool of `pool_size` samples which is cut into `n_contexts` disjoint
/// contexts; test samples come without replacement from the samples outside
/// the pool, so no test sample is shared between contexts or with any context.
ContextSplit split_contexts(const Dataset& dataset, const SplitParams& params);

/// Sets exactly round_half_up(ratio * m) auxiliary values to missing. Indices
/// come from a seeded permutation, so for one seed the masked set grows
/// monotonically with `ratio`. The label is untouched.
Sample apply_missing_mask(const Sample& sample, double ratio, std::uint64_t seed);

}  // namespace fuess
