#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fuess {

struct ScoredVariable {
  std::string name;
  double score = 0.0;

  bool operator==(const ScoredVariable&) const = default;
};

/// Output of the auxiliary-variable selection stage.
struct SelectionResult {
  std::vector<ScoredVariable> scores;  // catalog order, averaged over runs
  std::vector<std::string> ranking;    // descending score, ties alphabetical
  std::string global_explanation;
  std::vector<std::string> selected;   // first m of ranking
  std::size_t runs = 0;
  double fraction = 0.0;
  /// Top-m set of every individual run, the input of ascs().
  std::vector<std::vector<std::string>> run_selections;
  std::vector<std::string> run_explanations;

  double score_of(const std::string& name) const;
  bool is_selected(const std::string& name) const;

  bool operator==(const SelectionResult&) const = default;
};

nlohmann::json to_json(const SelectionResult& selection);
SelectionResult selection_from_json(const nlohmann::json& j);

}  // namespace fuess
