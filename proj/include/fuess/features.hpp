#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fuess/domain.hpp"

namespace fuess {

enum class RankMethod { Pearson, Spearman, Fisher, MutualInformation, Rfe, Random };

std::string to_string(RankMethod method);
RankMethod parse_rank_method(std::string_view text);

struct RankOptions {
  std::size_t fisher_bins = 4;  // label quantile bins
  std::size_t mi_bins = 16;     // equal-frequency bins per axis
  std::uint64_t seed = 0;       // RANDOM only
};

/// Orders `names` (one per column of `x`) from most to least relevant to
/// `y`. Ties keep column order; constant columns go last with a warning.
/// Throws TooFewSamples below two rows, InvalidArgument on shape mismatch or
/// non-finite input.
std::vector<std::string> rank_features(RankMethod method, std::span<const std::string> names,
                                       const Eigen::MatrixXd& x, std::span<const double> y,
                                       const RankOptions& options = {});

/// Dataset form; every sample must be complete and labelled.
std::vector<std::string> rank_features(RankMethod method, const Dataset& data,
                                       const RankOptions& options = {});

}  // namespace fuess
