#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fuess/domain.hpp"

namespace fuess {

struct VariableRange {
  double lo = 0.0;
  double hi = 1.0;
  int decimals = 3;  // readings are rounded to this many decimals
};

enum class ResponseShape { Linear, Nonlinear };

/// Smooth functions available to NONLINEAR responses; each maps the
/// normalised reading u in [0, 1] to a term weighted like the linear case.
enum class SmoothFunction { Sine, Square, Exp };

std::string to_string(SmoothFunction f);
SmoothFunction parse_smooth_function(std::string_view text);

/// Readings are uniform on each variable's range. With u_j the reading
/// rescaled to [0, 1], the label is
///   LINEAR:    intercept + sum_j w_j u_j
///   NONLINEAR: intercept + sum_j w_j f(u_j)
/// plus N(0, noise_std²).
struct GeneratorSpec {
  std::size_t n_samples = 0;
  std::vector<VariableSpec> catalog;
  std::vector<VariableRange> ranges;
  VariableSpec primary;
  TaskConfig task;
  ResponseShape shape = ResponseShape::Linear;
  SmoothFunction function = SmoothFunction::Sine;
  std::vector<double> weights;
  double intercept = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  /// Variables with a non-zero weight, strongest first.
  std::vector<std::string> informative() const;
};

/// Throws InvalidSpec when sizes disagree, n_samples is 0, a range is empty
/// or noise_std is negative.
Dataset generate(const GeneratorSpec& spec);

/// "pensim-like": 22 fermentation variables, 3 informative.
/// "poly-like": 7 polypropylene variables, 4 informative.
/// The first informative variable carries the largest weight.
GeneratorSpec preset(std::string_view name, std::size_t n_samples = 600, std::uint64_t seed = 0,
                     double noise_std = 0.0);
std::vector<std::string> preset_names();

}  // namespace fuess
